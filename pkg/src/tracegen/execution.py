"""Sandboxed execution of synthesized programs, plus trace-derived questions.

Two interchangeable backends:

* ``SubprocessBackend`` spawns an isolated interpreter running the trace
  harness script and speaks the JSON wire protocol over stdin/stdout.
* ``ReplayBackend`` serves previously recorded (or hand-written) results
  keyed by request digest, so tests run with no interpreter at all.

``RecordingBackend`` wraps the subprocess backend and captures fixtures for
later replay; a record/replay round trip is byte-identical.
"""

from __future__ import annotations

import json
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .jsonl import canonical_dumps, digest

MODE_PLAIN = "plain"
MODE_TRACE = "trace"

STATUS_OK = "ok"
STATUS_RUNTIME_ERROR = "runtime_error"
STATUS_TIMEOUT = "timeout"
STATUS_OVERSIZED = "oversized_output"
STATUS_INTERPRETER_MISSING = "interpreter_missing"

DEFAULT_TIMEOUT_MS = 5000
DEFAULT_OUTPUT_CAP_BYTES = 64 * 1024


class ExecutionBackendError(Exception):
    """Infrastructure failure (harness crash, missing fixture); never a discard."""


class FixtureMissError(ExecutionBackendError):
    pass


@dataclass(frozen=True)
class ExecutionRequest:
    code: str
    input_literal: str
    entry_point: str = "f"
    mode: str = MODE_PLAIN
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    output_cap_bytes: int = DEFAULT_OUTPUT_CAP_BYTES

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.output_cap_bytes <= 0:
            raise ValueError("output_cap_bytes must be positive")
        if self.mode not in (MODE_PLAIN, MODE_TRACE):
            raise ValueError(f"unknown mode {self.mode!r}")

    def wire_dict(self) -> dict:
        return {
            "code": self.code,
            "entry_point": self.entry_point,
            "input_literal": self.input_literal,
            "mode": self.mode,
        }

    def digest(self) -> str:
        return digest(
            {
                **self.wire_dict(),
                "timeout_ms": self.timeout_ms,
                "output_cap_bytes": self.output_cap_bytes,
            }
        )


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    output_literal: Optional[str] = None
    stdout_text: str = ""
    error_kind: Optional[str] = None

    def __post_init__(self):
        if (self.status == STATUS_OK) != (self.output_literal is not None):
            raise ValueError("output_literal must be present iff status is ok")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "output_literal": self.output_literal,
            "stdout_text": self.stdout_text,
            "error_kind": self.error_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionResult":
        return cls(
            status=d["status"],
            output_literal=d.get("output_literal"),
            stdout_text=d.get("stdout_text", ""),
            error_kind=d.get("error_kind"),
        )


@dataclass(frozen=True)
class StateEvent:
    line: int
    name: str
    type_name: str
    value_literal: str


@dataclass(frozen=True)
class ExecutionTrace:
    executed_lines: tuple[int, ...]
    state_events: tuple[StateEvent, ...]

    @property
    def covered_lines(self) -> frozenset[int]:
        return frozenset(self.executed_lines)

    @property
    def next_line_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.executed_lines, self.executed_lines[1:]))

    def to_dict(self) -> dict:
        return {
            "executed_lines": list(self.executed_lines),
            "state_events": [[e.line, e.name, e.type_name, e.value_literal] for e in self.state_events],
            "next_line_pairs": [list(p) for p in self.next_line_pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionTrace":
        trace = cls(
            executed_lines=tuple(d["executed_lines"]),
            state_events=tuple(StateEvent(*e) for e in d["state_events"]),
        )
        declared = tuple(tuple(p) for p in d.get("next_line_pairs", []))
        if declared and declared != trace.next_line_pairs:
            raise ExecutionBackendError("wire next_line_pairs disagree with executed_lines")
        return trace


class SubprocessBackend:
    """Runs the harness script in a fresh interpreter per request.

    The child gets an empty environment and a temp working directory;
    OS-level sandboxing is out of scope.
    """

    def __init__(self, harness_script: str | Path, python_exe: str | None = None):
        self.harness_script = Path(harness_script).resolve()
        self.python_exe = python_exe or sys.executable

    def execute(self, request: ExecutionRequest) -> tuple[ExecutionResult, Optional[ExecutionTrace]]:
        if not self.harness_script.exists():
            raise ExecutionBackendError(f"harness script not found: {self.harness_script}")
        payload = canonical_dumps(request.wire_dict()).encode("utf-8")
        with tempfile.TemporaryDirectory() as workdir:
            try:
                proc = subprocess.run(
                    [self.python_exe, str(self.harness_script)],
                    input=payload,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    timeout=request.timeout_ms / 1000.0,
                    cwd=workdir,
                    env={},
                )
            except FileNotFoundError:
                return ExecutionResult(status=STATUS_INTERPRETER_MISSING), None
            except subprocess.TimeoutExpired:
                return ExecutionResult(status=STATUS_TIMEOUT), None
        if proc.returncode != 0:
            raise ExecutionBackendError(
                f"harness exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:500]}"
            )
        try:
            wire = json.loads(proc.stdout.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ExecutionBackendError(f"harness emitted invalid JSON: {exc}") from None
        result = ExecutionResult.from_dict(wire)
        trace = ExecutionTrace.from_dict(wire["trace"]) if wire.get("trace") else None
        return result, trace


class ReplayBackend:
    """Serves recorded results from an in-memory mapping or a fixture directory."""

    def __init__(self, fixtures: dict[str, dict] | None = None, fixtures_dir: str | Path | None = None):
        self._fixtures = dict(fixtures or {})
        self._dir = Path(fixtures_dir) if fixtures_dir else None

    def _load(self, key: str) -> dict:
        if key in self._fixtures:
            return self._fixtures[key]
        if self._dir is not None:
            path = self._dir / f"{key}.json"
            if path.exists():
                fixture = json.loads(path.read_text(encoding="utf-8"))
                self._fixtures[key] = fixture
                return fixture
        raise FixtureMissError(f"no replay fixture for request digest {key[:12]}...")

    def execute(self, request: ExecutionRequest) -> tuple[ExecutionResult, Optional[ExecutionTrace]]:
        fixture = self._load(request.digest())
        result = ExecutionResult.from_dict(fixture["result"])
        trace = ExecutionTrace.from_dict(fixture["trace"]) if fixture.get("trace") else None
        return result, trace


class RecordingBackend:
    """Wraps another backend and saves every response as a replay fixture."""

    def __init__(self, inner, fixtures_dir: str | Path):
        self.inner = inner
        self.fixtures_dir = Path(fixtures_dir)
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)

    def execute(self, request: ExecutionRequest) -> tuple[ExecutionResult, Optional[ExecutionTrace]]:
        result, trace = self.inner.execute(request)
        fixture = {
            "request": request.wire_dict(),
            "result": result.to_dict(),
            "trace": trace.to_dict() if trace else None,
        }
        path = self.fixtures_dir / f"{request.digest()}.json"
        path.write_text(canonical_dumps(fixture) + "\n", encoding="utf-8")
        return result, trace


def _apply_output_cap(request: ExecutionRequest, result: ExecutionResult) -> ExecutionResult:
    if result.status != STATUS_OK:
        return result
    size = len(result.stdout_text.encode("utf-8")) + len((result.output_literal or "").encode("utf-8"))
    if size > request.output_cap_bytes:
        return ExecutionResult(status=STATUS_OVERSIZED, stdout_text="", error_kind=None)
    return result


def run(request: ExecutionRequest, backend) -> tuple[ExecutionResult, Optional[ExecutionTrace]]:
    """Execute one request; plain mode never yields a trace, trace mode yields
    one iff the run succeeded."""
    result, trace = backend.execute(request)
    result = _apply_output_cap(request, result)
    if request.mode != MODE_TRACE or result.status != STATUS_OK:
        trace = None
    return result, trace


def run_many(requests, backend, max_workers: int = 4):
    """Bounded-parallel map of run() preserving input order."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda r: run(r, backend), requests))


@dataclass(frozen=True)
class TraceQuestion:
    kind: str  # "coverage" | "state" | "path"
    payload: dict
    gold_answer: str


def ground_truth_questions(code: str, trace: ExecutionTrace) -> list[TraceQuestion]:
    """Exhaustive REval-style question set for one successful traced run."""
    questions: list[TraceQuestion] = []
    covered = trace.covered_lines
    for lineno, text in enumerate(code.splitlines(), start=1):
        if not text.strip():
            continue
        questions.append(
            TraceQuestion(
                kind="coverage",
                payload={"line": lineno},
                gold_answer="yes" if lineno in covered else "no",
            )
        )
    for event in trace.state_events:
        questions.append(
            TraceQuestion(
                kind="state",
                payload={"line": event.line, "variable": event.name},
                gold_answer=f"{event.type_name}, {event.value_literal}",
            )
        )
    for step, (line, successor) in enumerate(trace.next_line_pairs):
        questions.append(
            TraceQuestion(
                kind="path",
                payload={"line": line, "step": step},
                gold_answer=str(successor),
            )
        )
    return questions

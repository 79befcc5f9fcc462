"""Pipeline stages over persisted JSONL files.

Each stage reads its input file, writes a canonical JSONL output plus a
stats sidecar, and is skip-safe: when the sidecar's input/config digests
match, the stage is not re-run. The CLI in ``cli`` is a thin wrapper
around these functions.
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from . import records
from .catalog import DEFAULT_MAX_DEPTH, enumerate_targets, sample_constraints
from .decontam import DEFAULT_NGRAM, build_index, is_contaminated
from .evalharness import TaskRecord, aggregate, score_record
from .execution import (
    DEFAULT_OUTPUT_CAP_BYTES,
    DEFAULT_TIMEOUT_MS,
    ExecutionRequest,
    ReplayBackend,
    SubprocessBackend,
    ground_truth_questions,
    run,
)
from .filtering import rejection_sample_trace, validate_case
from .grpo import GrpoConfig
from .jsonl import digest, file_digest, read_jsonl, write_jsonl
from .literals import LiteralParseError, mutate_case, parse_call_literals, render_args
from .records import TestCaseRecord
from .teacher import (
    BackendConfig,
    HttpBackend,
    StubBackend,
    build_cot_prompt,
    build_generation_prompt,
    parse_teacher_output,
)
from .toytrain import toy_train

STAGE_VERSION = "1"


class ConfigError(ValueError):
    pass


class DependencyError(RuntimeError):
    def __init__(self, missing: str, prerequisite: str):
        super().__init__(f"input {missing} is missing; run the `{prerequisite}` subcommand first")
        self.prerequisite = prerequisite


@dataclass(frozen=True)
class TeacherSettings:
    backend: str = "stub"
    stub_fixtures_path: Optional[str] = None
    base_url: str = ""
    model: str = ""
    temperature: float = 0.7
    api_key_env: str = "TEACHER_API_KEY"


@dataclass(frozen=True)
class ExecutionSettings:
    backend: str = "subprocess"
    harness_script: Optional[str] = None
    replay_dir: Optional[str] = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    output_cap_bytes: int = DEFAULT_OUTPUT_CAP_BYTES


@dataclass(frozen=True)
class PipelineConfig:
    catalog_path: Optional[str] = None
    output_dir: str = "out"
    seed: int = 1
    max_depth: int = DEFAULT_MAX_DEPTH
    mutants_per_case: int = 2
    jobs: int = 4
    strict: bool = True
    decontam_n: int = DEFAULT_NGRAM
    test_set_paths: tuple[str, ...] = ()
    teacher: TeacherSettings = field(default_factory=TeacherSettings)
    execution: ExecutionSettings = field(default_factory=ExecutionSettings)
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    grpo_iterations: int = 500
    grpo_learning_rate: float = 0.5

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "PipelineConfig":
        try:
            teacher = TeacherSettings(**raw.pop("teacher", {}))
            execution = ExecutionSettings(**raw.pop("execution", {}))
            grpo = GrpoConfig(**raw.pop("grpo", {}))
            cfg = cls(
                teacher=teacher,
                execution=execution,
                grpo=grpo,
                test_set_paths=tuple(raw.pop("test_set_paths", ())),
                **raw,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(raw)

    def validate(self) -> None:
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be non-negative")
        if self.mutants_per_case < 1:
            raise ConfigError("mutants_per_case must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        if self.decontam_n < 1:
            raise ConfigError("decontam_n must be positive")
        if self.teacher.backend not in ("stub", "http"):
            raise ConfigError(f"unknown teacher backend {self.teacher.backend!r}")
        if self.execution.backend not in ("subprocess", "replay"):
            raise ConfigError(f"unknown execution backend {self.execution.backend!r}")
        for p in (self.catalog_path, self.teacher.stub_fixtures_path, self.execution.harness_script):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"configured path does not exist: {p}")
        for p in self.test_set_paths:
            if not Path(p).exists():
                raise ConfigError(f"test set path does not exist: {p}")

    def config_digest(self) -> str:
        return digest(
            {
                "seed": self.seed,
                "max_depth": self.max_depth,
                "mutants_per_case": self.mutants_per_case,
                "strict": self.strict,
                "decontam_n": self.decontam_n,
                "stage_version": STAGE_VERSION,
            }
        )


def make_teacher_backend(config: PipelineConfig):
    if config.teacher.backend == "stub":
        fixtures: dict[str, str] = {}
        if config.teacher.stub_fixtures_path:
            fixtures = json.loads(Path(config.teacher.stub_fixtures_path).read_text(encoding="utf-8"))
        return StubBackend(fixtures)
    return HttpBackend(
        BackendConfig(
            base_url=config.teacher.base_url,
            model=config.teacher.model,
            temperature=config.teacher.temperature,
            api_key_env=config.teacher.api_key_env,
        )
    )


def make_execution_backend(config: PipelineConfig):
    if config.execution.backend == "replay":
        if not config.execution.replay_dir:
            raise ConfigError("replay execution backend requires execution.replay_dir")
        return ReplayBackend(fixtures_dir=config.execution.replay_dir)
    if not config.execution.harness_script:
        raise ConfigError("subprocess execution backend requires execution.harness_script")
    return SubprocessBackend(config.execution.harness_script)


def split_program(code_text: str, entry_point: str = "f") -> tuple[str, str]:
    """Split a teacher program into (function code, input argument list) by
    locating the last literal-only `entry_point(...)` call line."""
    lines = code_text.splitlines()
    for i in range(len(lines) - 1, -1, -1):
        stripped = lines[i].strip()
        if not stripped.startswith(f"{entry_point}("):
            continue
        try:
            spec = parse_call_literals(stripped)
        except LiteralParseError:
            continue
        if spec.func_name != entry_point:
            continue
        remaining = "\n".join(lines[:i] + lines[i + 1 :]).strip("\n")
        return remaining, render_args(spec.args)
    raise LiteralParseError(f"no literal call line for entry point {entry_point!r} found", 0)


@dataclass(frozen=True)
class StageResult:
    stage: str
    out_path: Path
    counts: dict[str, int]
    skipped: bool = False


def _sidecar_path(out_path: Path) -> Path:
    return out_path.with_suffix(out_path.suffix + ".stats.json")


def _should_skip(out_path: Path, input_digest: str, config_digest: str) -> bool:
    sidecar = _sidecar_path(out_path)
    if not (out_path.exists() and sidecar.exists()):
        return False
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    return meta.get("input_digest") == input_digest and meta.get("config_digest") == config_digest


def _write_sidecar(stage: str, out_path: Path, counts: dict[str, int], input_digest: str, config_digest: str, started: float) -> None:
    meta = {
        "stage": stage,
        "stage_version": STAGE_VERSION,
        "input_digest": input_digest,
        "config_digest": config_digest,
        "counts": counts,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    _sidecar_path(out_path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _require_input(path: Optional[str | Path], prerequisite: str) -> Path:
    if path is None or not Path(path).exists():
        raise DependencyError(str(path), prerequisite)
    return Path(path)


def stage_catalog(config: PipelineConfig, out_path: str | Path) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    targets = enumerate_targets(config.catalog_path)
    input_digest = file_digest(config.catalog_path) if config.catalog_path else "builtin"
    cfg_digest = config.config_digest()
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("catalog", out_path, {}, skipped=True)
    rows = [
        {"type_name": t.type_name, "method_name": t.method_name, "arity_hint": t.arity_hint}
        for t in targets
    ]
    write_jsonl(out_path, rows)
    counts = {"targets": len(rows)}
    _write_sidecar("catalog", out_path, counts, input_digest, cfg_digest, started)
    return StageResult("catalog", out_path, counts)


def stage_generate(
    config: PipelineConfig,
    catalog_jsonl: str | Path,
    out_path: str | Path,
    seed: Optional[int] = None,
    limit: Optional[int] = None,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    catalog_jsonl = _require_input(catalog_jsonl, "catalog")
    seed = config.seed if seed is None else seed
    input_digest = file_digest(catalog_jsonl)
    cfg_digest = digest({"base": config.config_digest(), "seed": seed, "limit": limit})
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("generate", out_path, {}, skipped=True)
    teacher = make_teacher_backend(config)
    rows = []
    counts: Counter = Counter()
    from .catalog import MethodDescriptor

    for row in read_jsonl(catalog_jsonl):
        if limit is not None and counts["generated"] + counts["failed_parse"] >= limit:
            break
        method = MethodDescriptor(row["type_name"], row["method_name"], row.get("arity_hint", 0))
        constraints = sample_constraints(method, seed, config.max_depth)
        prompt = build_generation_prompt(constraints)
        response = teacher.complete(prompt)
        parsed = parse_teacher_output(response.raw_text)
        if parsed.code_block is None:
            counts["failed_parse"] += 1
            continue
        try:
            code, input_literal = split_program(parsed.code_block)
        except LiteralParseError:
            counts["failed_parse"] += 1
            continue
        record = TestCaseRecord(
            id=f"{method.type_name}.{method.method_name}.s{seed}",
            code=code,
            entry_point="f",
            input_literal=input_literal,
            constraints=constraints,
        )
        rows.append(record.to_dict())
        counts["generated"] += 1
    write_jsonl(out_path, rows)
    _write_sidecar("generate", out_path, dict(counts), input_digest, cfg_digest, started)
    return StageResult("generate", out_path, dict(counts))


def stage_mutate(
    config: PipelineConfig,
    in_path: str | Path,
    out_path: str | Path,
    seed: Optional[int] = None,
    count: Optional[int] = None,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    in_path = _require_input(in_path, "filter")
    seed = config.seed if seed is None else seed
    count = config.mutants_per_case if count is None else count
    input_digest = file_digest(in_path)
    cfg_digest = digest({"base": config.config_digest(), "seed": seed, "count": count})
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("mutate", out_path, {}, skipped=True)
    rows = []
    counts: Counter = Counter()
    for raw in read_jsonl(in_path):
        case = TestCaseRecord.from_dict(raw)
        if case.status != records.VALIDATED:
            counts["skipped_unvalidated"] += 1
            continue
        for child in mutate_case(case, seed=seed, count=count):
            rows.append(child.to_dict())
            counts["mutants"] += 1
    write_jsonl(out_path, rows)
    _write_sidecar("mutate", out_path, dict(counts), input_digest, cfg_digest, started)
    return StageResult("mutate", out_path, dict(counts))


def stage_filter(
    config: PipelineConfig,
    in_path: str | Path,
    out_path: str | Path,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    in_path = _require_input(in_path, "generate")
    input_digest = file_digest(in_path)
    cfg_digest = config.config_digest()
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("filter", out_path, {}, skipped=True)
    backend = make_execution_backend(config)
    rows = []
    counts: Counter = Counter()
    for raw in read_jsonl(in_path):
        case = validate_case(
            TestCaseRecord.from_dict(raw),
            backend,
            timeout_ms=config.execution.timeout_ms,
            output_cap_bytes=config.execution.output_cap_bytes,
        )
        rows.append(case.to_dict())
        if case.status == records.VALIDATED:
            counts["validated"] += 1
        else:
            counts[f"discarded({case.discard_reason})"] += 1
    write_jsonl(out_path, rows)
    _write_sidecar("filter", out_path, dict(counts), input_digest, cfg_digest, started)
    return StageResult("filter", out_path, dict(counts))


def stage_distill(
    config: PipelineConfig,
    in_path: str | Path,
    out_path: str | Path,
    strict: Optional[bool] = None,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    in_path = _require_input(in_path, "filter")
    strict = config.strict if strict is None else strict
    input_digest = file_digest(in_path)
    cfg_digest = digest({"base": config.config_digest(), "strict": strict})
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("distill", out_path, {}, skipped=True)
    teacher = make_teacher_backend(config)
    backend = make_execution_backend(config)
    rows = []
    counts: Counter = Counter()
    for raw in read_jsonl(in_path):
        case = TestCaseRecord.from_dict(raw)
        if case.status != records.VALIDATED:
            continue
        for direction in ("forward", "backward"):
            prompt = build_cot_prompt(case, direction)
            response = teacher.complete(prompt)
            parsed = parse_teacher_output(response.raw_text)
            record = rejection_sample_trace(
                case, parsed, direction, backend, strict=strict, prompt_text=prompt.user_text
            )
            rows.append(record.to_dict())
            counts["accepted" if record.accepted else f"rejected({record.reject_reason})"] += 1
    write_jsonl(out_path, rows)
    _write_sidecar("distill", out_path, dict(counts), input_digest, cfg_digest, started)
    return StageResult("distill", out_path, dict(counts))


def stage_decontam(
    config: PipelineConfig,
    in_path: str | Path,
    out_path: str | Path,
    n: Optional[int] = None,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    in_path = _require_input(in_path, "filter")
    n = config.decontam_n if n is None else n
    input_digest = digest([file_digest(in_path)] + [file_digest(p) for p in config.test_set_paths])
    cfg_digest = digest({"base": config.config_digest(), "n": n})
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("decontam", out_path, {}, skipped=True)
    corpus = []
    for path in config.test_set_paths:
        for row in read_jsonl(path):
            corpus.append(row["text"])
    index = build_index(corpus, n=n)
    kept_rows, discarded_rows = [], []
    for raw in read_jsonl(in_path):
        case = TestCaseRecord.from_dict(raw)
        if is_contaminated(case.code, index):
            discarded_rows.append(
                case.with_status(records.DISCARDED, reason=records.DISCARD_CONTAMINATED).to_dict()
            )
        else:
            kept_rows.append(raw)
    write_jsonl(out_path, kept_rows)
    discarded_path = out_path.with_name(out_path.stem + ".discarded" + out_path.suffix)
    write_jsonl(discarded_path, discarded_rows)
    total = len(kept_rows) + len(discarded_rows)
    counts = {
        "kept": len(kept_rows),
        "discarded": len(discarded_rows),
        "indexed_documents": index.source_count,
    }
    _write_sidecar("decontam", out_path, counts, input_digest, cfg_digest, started)
    report = {
        **counts,
        "discard_rate": (len(discarded_rows) / total) if total else 0.0,
        "n": n,
    }
    out_path.with_name(out_path.stem + ".report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return StageResult("decontam", out_path, counts)


def stage_grpo_demo(
    config: PipelineConfig,
    out_path: str | Path,
    iterations: Optional[int] = None,
    seed: Optional[int] = None,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    iterations = config.grpo_iterations if iterations is None else iterations
    seed = config.seed if seed is None else seed
    curve = toy_train(
        config=config.grpo,
        iterations=iterations,
        seed=seed,
        learning_rate=config.grpo_learning_rate,
    )
    curve.write_csv(out_path)
    first, last = curve.stats[0], curve.stats[-1]
    counts = {"iterations": iterations}
    _write_sidecar("grpo-demo", out_path, counts, digest({"seed": seed, "iterations": iterations}), config.config_digest(), started)
    print(
        f"grpo-demo: mean reward {first.mean_reward:.3f} -> {last.mean_reward:.3f}, "
        f"overlength fraction {first.overlength_fraction:.3f} -> {last.overlength_fraction:.3f} "
        f"over {iterations} iterations"
    )
    return StageResult("grpo-demo", out_path, counts)


def stage_eval(
    config: PipelineConfig,
    tasks_path: str | Path,
    predictions_path: str | Path,
    out_path: str | Path,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    tasks_path = _require_input(tasks_path, "trace")
    predictions_path = _require_input(predictions_path, "eval (predictions file)")
    backend = make_execution_backend(config)
    predictions = {row["task_id"]: row["prediction"] for row in read_jsonl(predictions_path)}
    results = []
    counts: Counter = Counter()
    for raw in read_jsonl(tasks_path):
        record = TaskRecord.from_dict(raw)
        prediction = predictions.get(record.task_id, "")
        outcome = score_record(record, prediction, backend)
        results.append((record.kind, outcome.correct))
        counts["correct" if outcome.correct else "incorrect"] += 1
    report = aggregate(results)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_sidecar("eval", out_path, dict(counts), file_digest(tasks_path), config.config_digest(), started)
    print(report.table())
    return StageResult("eval", out_path, dict(counts))


def stage_trace(
    config: PipelineConfig,
    in_path: str | Path,
    out_path: str | Path,
) -> StageResult:
    out_path = Path(out_path)
    started = time.monotonic()
    in_path = _require_input(in_path, "filter")
    input_digest = file_digest(in_path)
    cfg_digest = config.config_digest()
    if _should_skip(out_path, input_digest, cfg_digest):
        return StageResult("trace", out_path, {}, skipped=True)
    backend = make_execution_backend(config)
    rows = []
    counts: Counter = Counter()
    for raw in read_jsonl(in_path):
        case = TestCaseRecord.from_dict(raw)
        if case.status != records.VALIDATED:
            continue
        request = ExecutionRequest(
            code=case.code,
            entry_point=case.entry_point,
            input_literal=case.input_literal,
            mode="trace",
            timeout_ms=config.execution.timeout_ms,
            output_cap_bytes=config.execution.output_cap_bytes,
        )
        result, trace = run(request, backend)
        if result.status != "ok" or trace is None:
            counts["untraceable"] += 1
            continue
        for idx, q in enumerate(ground_truth_questions(case.code, trace)):
            rows.append(
                TaskRecord(
                    task_id=f"{case.id}.t{idx}",
                    kind=q.kind,
                    code=case.code,
                    entry_point=case.entry_point,
                    shown=q.payload,
                    gold=q.gold_answer,
                ).to_dict()
            )
            counts[q.kind] += 1
    write_jsonl(out_path, rows)
    _write_sidecar("trace", out_path, dict(counts), input_digest, cfg_digest, started)
    return StageResult("trace", out_path, dict(counts))

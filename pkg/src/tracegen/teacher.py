"""Teacher-model prompts, pluggable completion backends, and output parsing.

Two backends exist on purpose: a real HTTP chat-completion client and a
deterministic stub keyed by prompt digest, so the test suite never needs a
live model. Prompt templates are versioned resource files.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .jsonl import digest
from .records import TestCaseRecord

INTENT_GENERATE = "generate_case"
INTENT_COT_FORWARD = "cot_forward"
INTENT_COT_BACKWARD = "cot_backward"

PROMPT_TEMPLATE_VERSION = "v1"

_ANSWER_OPEN = "<Answer>"
_ANSWER_CLOSE = "</Answer>"
_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\n(.*?)```", re.DOTALL)
_REASONING_RE = re.compile(r"<Reasoning>(.*?)</Reasoning>", re.DOTALL)


class TeacherError(Exception):
    pass


class TransportError(TeacherError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class BackendError(TeacherError):
    def __init__(self, status_code: int, body: str):
        super().__init__(f"backend returned HTTP {status_code}: {body[:200]}")
        self.status_code = status_code


class FixtureMissingError(TeacherError):
    pass


class MalformedTagError(TeacherError):
    pass


@dataclass(frozen=True)
class PromptSpec:
    system_text: str
    user_text: str
    intent: str

    def digest(self) -> str:
        return digest({"system": self.system_text, "user": self.user_text, "intent": self.intent})


@dataclass(frozen=True)
class TeacherResponse:
    raw_text: str
    backend_id: str
    latency_ms: int


@dataclass(frozen=True)
class ParsedTeacherOutput:
    code_block: Optional[str] = None
    answer_literal: Optional[str] = None
    reasoning_text: Optional[str] = None


def _template(name: str) -> str:
    return resources.files("tracegen").joinpath(f"prompts/{name}.txt").read_text(encoding="utf-8")


def build_generation_prompt(constraints, entry_point: str = "f") -> PromptSpec:
    m = constraints.base_method
    nested_clause = (
        "the program must contain nested calls of this method"
        if constraints.use_nested_calls
        else "do not nest calls of this method"
    )
    others_clause = (
        "incorporate at least one other built-in method"
        if constraints.use_other_methods
        else "use no other built-in methods"
    )
    seq = constraints.control_flow.sequence
    if not seq:
        control_clause = "use no if/while/for statements"
    else:
        parts = [f"a `{seq[0]}` statement"]
        for kind in seq[1:]:
            parts.append(f"containing a `{kind}` statement")
        control_clause = "the function body must contain " + " ".join(parts) + " (nested in that order)"
    user_text = _template("generate_case").format(
        type_name=m.type_name,
        method_name=m.method_name,
        entry_point=entry_point,
        nested_clause=nested_clause,
        others_clause=others_clause,
        control_clause=control_clause,
    )
    return PromptSpec(system_text=_template("system").strip(), user_text=user_text, intent=INTENT_GENERATE)


def build_cot_prompt(case: TestCaseRecord, direction: str) -> PromptSpec:
    if direction == "forward":
        user_text = _template("cot_forward").format(
            code=case.code, entry_point=case.entry_point, input_literal=case.input_literal
        )
        intent = INTENT_COT_FORWARD
    elif direction == "backward":
        if case.expected_output_literal is None:
            raise ValueError("backward prompt requires a validated case with expected output")
        user_text = _template("cot_backward").format(
            code=case.code,
            entry_point=case.entry_point,
            expected_output_literal=case.expected_output_literal,
        )
        intent = INTENT_COT_BACKWARD
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return PromptSpec(system_text=_template("system").strip(), user_text=user_text, intent=intent)


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = ""
    model: str = ""
    temperature: float = 0.7
    api_key_env: str = "TEACHER_API_KEY"
    max_retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 60.0


class StubBackend:
    """Deterministic fixture backend keyed by prompt digest."""

    backend_id = "stub"

    def __init__(self, fixtures: dict[str, str]):
        self._fixtures = dict(fixtures)

    def complete(self, prompt: PromptSpec) -> TeacherResponse:
        key = prompt.digest()
        if key not in self._fixtures:
            raise FixtureMissingError(f"no fixture for prompt digest {key[:12]}... (intent {prompt.intent})")
        return TeacherResponse(raw_text=self._fixtures[key], backend_id=self.backend_id, latency_ms=0)


class HttpBackend:
    """Chat-completion HTTP client with exponential-backoff retries."""

    backend_id = "http"

    def __init__(self, config: BackendConfig, session=None, sleep=time.sleep):
        import requests

        self._config = config
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, prompt: PromptSpec) -> TeacherResponse:
        cfg = self._config
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": cfg.model,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        }
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        last_error = "no attempt made"
        for attempt in range(1, cfg.max_retries + 1):
            start = time.monotonic()
            try:
                resp = self._session.post(url, json=body, headers=headers, timeout=cfg.timeout_s)
            except OSError as exc:
                last_error = f"transport failure: {exc}"
            else:
                if resp.status_code == 200:
                    text = resp.json()["choices"][0]["message"]["content"]
                    latency = int((time.monotonic() - start) * 1000)
                    return TeacherResponse(raw_text=text, backend_id=self.backend_id, latency_ms=latency)
                if resp.status_code in (408, 429, 500, 502, 503, 504):
                    last_error = f"retryable HTTP {resp.status_code}"
                else:
                    raise BackendError(resp.status_code, resp.text)
            if attempt < cfg.max_retries:
                self._sleep(cfg.backoff_s * (2 ** (attempt - 1)))
        raise TransportError(last_error, attempts=cfg.max_retries)


def complete(prompt: PromptSpec, backend) -> TeacherResponse:
    return backend.complete(prompt)


def _extract_answer(raw_text: str) -> Optional[str]:
    opens = [m.start() for m in re.finditer(re.escape(_ANSWER_OPEN), raw_text)]
    closes = [m.start() for m in re.finditer(re.escape(_ANSWER_CLOSE), raw_text)]
    if not opens and not closes:
        return None
    if len(opens) != len(closes):
        raise MalformedTagError(f"unbalanced <Answer> tags ({len(opens)} open, {len(closes)} close)")
    for o, c in zip(opens, closes):
        if c < o:
            raise MalformedTagError("</Answer> appears before its <Answer>")
    return raw_text[opens[0] + len(_ANSWER_OPEN) : closes[0]].strip()


def parse_teacher_output(raw_text: str) -> ParsedTeacherOutput:
    """Pull the first fenced code block, <Answer> payload, and <Reasoning> text."""
    code_match = _FENCE_RE.search(raw_text)
    code_block = code_match.group(1).rstrip("\n") if code_match else None
    reasoning_match = _REASONING_RE.search(raw_text)
    reasoning_text = reasoning_match.group(1).strip() if reasoning_match else None
    return ParsedTeacherOutput(
        code_block=code_block,
        answer_literal=_extract_answer(raw_text),
        reasoning_text=reasoning_text,
    )

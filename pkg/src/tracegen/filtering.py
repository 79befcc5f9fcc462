"""Corpus validation and rejection sampling of teacher reasoning traces.

A case is kept only if it runs cleanly and its output renders to at most
50 characters. A reasoning trace is kept only if its embedded code runs
without errors; strict mode (default) additionally demands the tagged
answer be correct, since runnable-but-wrong traces poison distillation.
"""

from __future__ import annotations

from typing import Optional

from . import records
from .execution import (
    STATUS_OK,
    STATUS_OVERSIZED,
    STATUS_RUNTIME_ERROR,
    STATUS_TIMEOUT,
    ExecutionRequest,
    run,
)
from .literals import LiteralParseError, parse_args_text, parse_call_literals, render_args
from .records import DistillationRecord, TestCaseRecord
from .teacher import ParsedTeacherOutput


def validate_case(
    case: TestCaseRecord,
    backend,
    timeout_ms: int = 5000,
    output_cap_bytes: int = 64 * 1024,
) -> TestCaseRecord:
    """Execute a raw case and mark it validated or discarded.

    Idempotent: non-raw records are returned unchanged. Backend
    infrastructure failures raise; they are never turned into discards.
    """
    if case.status != records.RAW:
        return case
    request = ExecutionRequest(
        code=case.code,
        entry_point=case.entry_point,
        input_literal=case.input_literal,
        mode="plain",
        timeout_ms=timeout_ms,
        output_cap_bytes=output_cap_bytes,
    )
    result, _ = run(request, backend)
    if result.status == STATUS_OK:
        assert result.output_literal is not None
        if len(result.output_literal) <= records.MAX_OUTPUT_CHARS:
            return case.with_status(records.VALIDATED, output=result.output_literal)
        return case.with_status(records.DISCARDED, reason=records.DISCARD_OVERSIZED)
    if result.status == STATUS_RUNTIME_ERROR:
        return case.with_status(records.DISCARDED, reason=records.DISCARD_RUNTIME_ERROR)
    if result.status == STATUS_TIMEOUT:
        return case.with_status(records.DISCARDED, reason=records.DISCARD_TIMEOUT)
    if result.status == STATUS_OVERSIZED:
        return case.with_status(records.DISCARDED, reason=records.DISCARD_OVERSIZED)
    raise RuntimeError(f"execution backend reported infrastructure status {result.status!r}")


def _structurally_equal(literal_a: str, literal_b: str) -> bool:
    try:
        return parse_args_text(f"({literal_a},)") == parse_args_text(f"({literal_b},)")
    except LiteralParseError:
        return literal_a.strip() == literal_b.strip()


def _normalize_answer_input(answer: str, entry_point: str) -> Optional[str]:
    """Coerce a backward answer into a canonical argument list, or None."""
    text = answer.strip()
    for candidate in (text, f"({text},)"):
        try:
            if candidate.startswith("(") and candidate.endswith(")"):
                return render_args(parse_args_text(candidate))
        except LiteralParseError:
            continue
    try:
        spec = parse_call_literals(text)
    except LiteralParseError:
        return None
    if spec.func_name != entry_point:
        return None
    return render_args(spec.args)


def rejection_sample_trace(
    case: TestCaseRecord,
    parsed: ParsedTeacherOutput,
    direction: str,
    backend,
    strict: bool = True,
    prompt_text: str = "",
) -> DistillationRecord:
    """Judge one teacher chain-of-thought trace against execution.

    Base criterion: the embedded code must run without errors. Strict mode
    additionally checks the tagged answer (forward: equals the case's
    expected output; backward: is a witness input reproducing it).
    """
    if case.status != records.VALIDATED:
        raise ValueError(f"case {case.id} must be validated before rejection sampling")

    def rejected(reason: str) -> DistillationRecord:
        return DistillationRecord(
            case_id=case.id,
            direction=direction,
            prompt_text=prompt_text,
            reasoning_text=parsed.reasoning_text or "",
            answer_literal=parsed.answer_literal or "",
            accepted=False,
            reject_reason=reason,
        )

    if parsed.code_block is None:
        return rejected(records.REJECT_NO_CODE)
    if parsed.answer_literal is None:
        return rejected(records.REJECT_MALFORMED_TAGS)

    request = ExecutionRequest(
        code=parsed.code_block,
        entry_point=case.entry_point,
        input_literal=case.input_literal,
        mode="plain",
    )
    result, _ = run(request, backend)
    if result.status != STATUS_OK:
        return rejected(records.REJECT_CODE_ERROR)

    if strict:
        assert case.expected_output_literal is not None
        if direction == "forward":
            if not _structurally_equal(parsed.answer_literal, case.expected_output_literal):
                return rejected(records.REJECT_WRONG_ANSWER)
        elif direction == "backward":
            witness = _normalize_answer_input(parsed.answer_literal, case.entry_point)
            if witness is None:
                return rejected(records.REJECT_WRONG_ANSWER)
            witness_result, _ = run(
                ExecutionRequest(
                    code=case.code,
                    entry_point=case.entry_point,
                    input_literal=witness,
                    mode="plain",
                ),
                backend,
            )
            if witness_result.status != STATUS_OK or not _structurally_equal(
                witness_result.output_literal, case.expected_output_literal
            ):
                return rejected(records.REJECT_WRONG_ANSWER)
        else:
            raise ValueError(f"unknown direction {direction!r}")

    return DistillationRecord(
        case_id=case.id,
        direction=direction,
        prompt_text=prompt_text,
        reasoning_text=parsed.reasoning_text or "",
        answer_literal=parsed.answer_literal,
        accepted=True,
    )

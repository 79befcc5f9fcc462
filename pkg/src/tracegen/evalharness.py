"""Scoring of model predictions on forward/backward/coverage/state/path tasks.

Forward and backward predictions are judged by execution, so any witness
input that reproduces the shown output passes a backward task. Malformed
predictions score false (with a diagnostic) rather than aborting a run.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

from .execution import STATUS_OK, ExecutionRequest, run
from .literals import LiteralParseError, parse_args_text, parse_call_literals, render_args

KINDS = ("forward", "backward", "coverage", "state", "path")


class EmptyReportError(ValueError):
    pass


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    kind: str
    code: str = ""
    entry_point: str = "f"
    shown: dict[str, Any] = field(default_factory=dict)
    gold: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "kind": self.kind,
            "code": self.code,
            "entry_point": self.entry_point,
            "shown": self.shown,
            "gold": self.gold,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TaskRecord":
        return cls(
            task_id=d["task_id"],
            kind=d["kind"],
            code=d.get("code", ""),
            entry_point=d.get("entry_point", "f"),
            shown=d.get("shown", {}),
            gold=d["gold"],
        )

    @classmethod
    def from_cruxeval_row(cls, row: dict[str, Any], kind: str, task_id: str | None = None) -> "TaskRecord":
        """Map a CRUXEval-style row: `code`, `input` (call-argument text),
        `output` (literal text). Forward shows the input, backward the output."""
        shown = {"input_literal": row["input"]} if kind == "forward" else {"output_literal": row["output"]}
        gold = row["output"] if kind == "forward" else row["input"]
        return cls(
            task_id=task_id or row.get("id", "crux"),
            kind=kind,
            code=row["code"],
            entry_point=row.get("entry_point", "f"),
            shown=shown,
            gold=gold,
        )

    @classmethod
    def from_reval_row(cls, row: dict[str, Any]) -> "TaskRecord":
        """Map an REval-style row: `question_type` in {coverage, state, path},
        `code`, a question payload, and `answer`."""
        kind = row["question_type"]
        return cls(
            task_id=row.get("id", "reval"),
            kind=kind,
            code=row["code"],
            entry_point=row.get("entry_point", "f"),
            shown=dict(row.get("payload", {})),
            gold=str(row["answer"]),
        )


@dataclass(frozen=True)
class ScoreOutcome:
    correct: bool
    diagnostic: Optional[str] = None


def _structural_eq(literal_a: str, literal_b: str) -> bool:
    try:
        return parse_args_text(f"({literal_a},)") == parse_args_text(f"({literal_b},)")
    except LiteralParseError:
        return literal_a.strip() == literal_b.strip()


def _as_args_text(prediction: str, entry_point: str) -> Optional[str]:
    text = prediction.strip()
    for candidate in (text, f"({text},)"):
        try:
            if candidate.startswith("(") and candidate.endswith(")"):
                return render_args(parse_args_text(candidate))
        except LiteralParseError:
            continue
    try:
        spec = parse_call_literals(text)
        if spec.func_name == entry_point:
            return render_args(spec.args)
    except LiteralParseError:
        pass
    return None


def score_record(record: TaskRecord, prediction: str, backend) -> ScoreOutcome:
    """Judge one prediction; execution-backed for forward and backward."""
    if record.kind == "forward":
        result, _ = run(
            ExecutionRequest(
                code=record.code,
                entry_point=record.entry_point,
                input_literal=record.shown["input_literal"],
                mode="plain",
            ),
            backend,
        )
        if result.status != STATUS_OK:
            return ScoreOutcome(False, diagnostic=f"reference execution failed: {result.status}")
        return ScoreOutcome(_structural_eq(prediction, result.output_literal))
    if record.kind == "backward":
        args_text = _as_args_text(prediction, record.entry_point)
        if args_text is None:
            return ScoreOutcome(False, diagnostic="prediction is not a literal argument list")
        result, _ = run(
            ExecutionRequest(
                code=record.code,
                entry_point=record.entry_point,
                input_literal=args_text,
                mode="plain",
            ),
            backend,
        )
        if result.status != STATUS_OK:
            return ScoreOutcome(False, diagnostic=f"witness execution failed: {result.status}")
        return ScoreOutcome(_structural_eq(result.output_literal, record.shown["output_literal"]))
    if record.kind == "coverage":
        answer = prediction.strip().lower()
        if answer not in ("yes", "no"):
            return ScoreOutcome(False, diagnostic="coverage answer must be yes/no")
        return ScoreOutcome(answer == record.gold.strip().lower())
    if record.kind == "state":
        pred_parts = [p.strip() for p in prediction.split(",", 1)]
        gold_parts = [p.strip() for p in record.gold.split(",", 1)]
        if len(pred_parts) != 2:
            return ScoreOutcome(False, diagnostic="state answer must be 'type, value'")
        type_ok = pred_parts[0] == gold_parts[0]
        return ScoreOutcome(type_ok and _structural_eq(pred_parts[1], gold_parts[1]))
    if record.kind == "path":
        try:
            return ScoreOutcome(int(prediction.strip()) == int(record.gold.strip()))
        except ValueError:
            return ScoreOutcome(False, diagnostic="path answer must be a line number")
    raise ValueError(f"unknown task kind {record.kind!r}")


@dataclass(frozen=True)
class KindScore:
    count: int
    correct: int

    @property
    def metric(self) -> float:
        return self.correct / self.count


@dataclass(frozen=True)
class ScoreReport:
    per_kind: dict[str, KindScore]
    overall: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_kind": {
                k: {"count": s.count, "correct": s.correct, "metric": s.metric}
                for k, s in sorted(self.per_kind.items())
            },
            "overall": self.overall,
        }

    def table(self) -> str:
        lines = [f"{'kind':<10} {'count':>6} {'correct':>8} {'metric':>8}"]
        for kind, s in sorted(self.per_kind.items()):
            lines.append(f"{kind:<10} {s.count:>6} {s.correct:>8} {s.metric:>8.3f}")
        total = sum(s.count for s in self.per_kind.values())
        correct = sum(s.correct for s in self.per_kind.values())
        lines.append(f"{'overall':<10} {total:>6} {correct:>8} {self.overall:>8.3f}")
        return "\n".join(lines)


def aggregate(results: list[tuple[str, bool]]) -> ScoreReport:
    """Fold (kind, correct) pairs into per-kind and overall accuracy."""
    if not results:
        raise EmptyReportError("cannot aggregate an empty result list")
    counts: dict[str, int] = defaultdict(int)
    corrects: dict[str, int] = defaultdict(int)
    for kind, ok in results:
        counts[kind] += 1
        corrects[kind] += int(ok)
    per_kind = {k: KindScore(count=counts[k], correct=corrects[k]) for k in counts}
    overall = sum(corrects.values()) / sum(counts.values())
    return ScoreReport(per_kind=per_kind, overall=overall)

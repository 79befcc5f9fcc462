"""Dataset record types and their JSON round-trip forms.

Every record carries enough provenance (seed, parent id, constraints) to
re-derive it from scratch, which keeps pipeline stages re-runnable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional

from .catalog import ControlFlowBlueprint, GenerationConstraints, MethodDescriptor

RAW = "raw"
VALIDATED = "validated"
DISCARDED = "discarded"

DISCARD_RUNTIME_ERROR = "runtime_error"
DISCARD_TIMEOUT = "timeout"
DISCARD_OVERSIZED = "oversized"
DISCARD_CONTAMINATED = "contaminated"

MAX_OUTPUT_CHARS = 50


@dataclass(frozen=True)
class Lineage:
    kind: str  # "base" | "mutant"
    parent_id: Optional[str] = None
    seed: Optional[int] = None

    @classmethod
    def base(cls) -> "Lineage":
        return cls(kind="base")

    @classmethod
    def mutant(cls, parent_id: str, seed: int) -> "Lineage":
        return cls(kind="mutant", parent_id=parent_id, seed=seed)


@dataclass(frozen=True)
class TestCaseRecord:
    __test__ = False  # pytest: not a test class despite the name

    id: str
    code: str
    entry_point: str
    input_literal: str
    expected_output_literal: Optional[str] = None
    constraints: Optional[GenerationConstraints] = None
    lineage: Lineage = field(default_factory=Lineage.base)
    status: str = RAW
    discard_reason: Optional[str] = None

    def with_status(self, status: str, reason: Optional[str] = None, output: Optional[str] = None):
        return replace(
            self, status=status, discard_reason=reason,
            expected_output_literal=output if output is not None else self.expected_output_literal,
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "code": self.code,
            "entry_point": self.entry_point,
            "input_literal": self.input_literal,
            "expected_output_literal": self.expected_output_literal,
            "lineage": {"kind": self.lineage.kind, "parent_id": self.lineage.parent_id, "seed": self.lineage.seed},
            "status": self.status,
            "discard_reason": self.discard_reason,
        }
        if self.constraints is not None:
            c = self.constraints
            d["constraints"] = {
                "type_name": c.base_method.type_name,
                "method_name": c.base_method.method_name,
                "arity_hint": c.base_method.arity_hint,
                "use_nested_calls": c.use_nested_calls,
                "use_other_methods": c.use_other_methods,
                "max_depth": c.control_flow.max_depth,
                "control_sequence": list(c.control_flow.sequence),
                "seed": c.seed,
            }
        else:
            d["constraints"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TestCaseRecord":
        constraints = None
        if d.get("constraints"):
            c = d["constraints"]
            constraints = GenerationConstraints(
                base_method=MethodDescriptor(c["type_name"], c["method_name"], c.get("arity_hint", 0)),
                use_nested_calls=c["use_nested_calls"],
                use_other_methods=c["use_other_methods"],
                control_flow=ControlFlowBlueprint(c["max_depth"], tuple(c["control_sequence"])),
                seed=c["seed"],
            )
        lin = d.get("lineage") or {"kind": "base"}
        return cls(
            id=d["id"],
            code=d["code"],
            entry_point=d["entry_point"],
            input_literal=d["input_literal"],
            expected_output_literal=d.get("expected_output_literal"),
            constraints=constraints,
            lineage=Lineage(lin["kind"], lin.get("parent_id"), lin.get("seed")),
            status=d.get("status", RAW),
            discard_reason=d.get("discard_reason"),
        )


REJECT_CODE_ERROR = "code_error"
REJECT_WRONG_ANSWER = "wrong_answer"
REJECT_NO_CODE = "no_code"
REJECT_MALFORMED_TAGS = "malformed_tags"


@dataclass(frozen=True)
class DistillationRecord:
    case_id: str
    direction: str  # "forward" | "backward"
    prompt_text: str
    reasoning_text: str
    answer_literal: str
    accepted: bool
    reject_reason: Optional[str] = None

    def __post_init__(self):
        if self.accepted and self.reject_reason is not None:
            raise ValueError("accepted records cannot carry a reject_reason")

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "direction": self.direction,
            "prompt_text": self.prompt_text,
            "reasoning_text": self.reasoning_text,
            "answer_literal": self.answer_literal,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DistillationRecord":
        return cls(
            case_id=d["case_id"],
            direction=d["direction"],
            prompt_text=d["prompt_text"],
            reasoning_text=d["reasoning_text"],
            answer_literal=d["answer_literal"],
            accepted=d["accepted"],
            reject_reason=d.get("reject_reason"),
        )

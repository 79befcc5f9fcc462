"""Literal-only call parsing, canonical rendering, and type-aware mutation.

Entry-point inputs are restricted to literal expressions (scalars plus
nested list/tuple/set/dict containers). Mutation replaces strings with
fresh random strings of length 5-20 and shifts integers by at most +/-5,
recursing into containers without changing their shape.
"""

from __future__ import annotations

import ast
import random
import string
from dataclasses import dataclass, field

STRING_CHARSET = string.ascii_lowercase + string.digits
MUTANT_STRING_MIN = 5
MUTANT_STRING_MAX = 20
INT_MUTATION_RADIUS = 5


class LiteralParseError(ValueError):
    """Parse failure; carries the byte offset of the offending token."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class LiteralValue:
    """Base of the literal tagged union."""

    __slots__ = ()


@dataclass(frozen=True)
class IntVal(LiteralValue):
    value: int


@dataclass(frozen=True)
class FloatVal(LiteralValue):
    value: float


@dataclass(frozen=True)
class BoolVal(LiteralValue):
    value: bool


@dataclass(frozen=True)
class NoneVal(LiteralValue):
    pass


@dataclass(frozen=True)
class StrVal(LiteralValue):
    value: str


@dataclass(frozen=True)
class ListVal(LiteralValue):
    items: tuple[LiteralValue, ...]


@dataclass(frozen=True)
class TupleVal(LiteralValue):
    items: tuple[LiteralValue, ...]


@dataclass(frozen=True)
class SetVal(LiteralValue):
    """Unordered; equality ignores element order. Must be non-empty, since
    the empty set has no literal syntax."""

    items: tuple[LiteralValue, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("SetVal cannot be empty (no literal form)")

    def __eq__(self, other):
        if not isinstance(other, SetVal):
            return NotImplemented
        return sorted(map(render_literal, self.items)) == sorted(map(render_literal, other.items))

    def __hash__(self):
        return hash(frozenset(render_literal(i) for i in self.items))


@dataclass(frozen=True)
class MapVal(LiteralValue):
    entries: tuple[tuple[LiteralValue, LiteralValue], ...] = field(default=())


@dataclass(frozen=True)
class CallSpec:
    func_name: str
    args: tuple[LiteralValue, ...]

    def render(self) -> str:
        return f"{self.func_name}({', '.join(render_literal(a) for a in self.args)})"


def _from_ast(node: ast.expr) -> LiteralValue:
    if isinstance(node, ast.Constant):
        v = node.value
        if v is None:
            return NoneVal()
        if isinstance(v, bool):
            return BoolVal(v)
        if isinstance(v, int):
            return IntVal(v)
        if isinstance(v, float):
            return FloatVal(v)
        if isinstance(v, str):
            return StrVal(v)
        raise LiteralParseError(f"unsupported constant {v!r}", node.col_offset)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _from_ast(node.operand)
        if isinstance(inner, (IntVal, FloatVal)) and not isinstance(inner, BoolVal):
            sign = -1 if isinstance(node.op, ast.USub) else 1
            return type(inner)(sign * inner.value)
        raise LiteralParseError("unary sign applies only to numbers", node.col_offset)
    if isinstance(node, ast.List):
        return ListVal(tuple(_from_ast(e) for e in node.elts))
    if isinstance(node, ast.Tuple):
        return TupleVal(tuple(_from_ast(e) for e in node.elts))
    if isinstance(node, ast.Set):
        return SetVal(tuple(_from_ast(e) for e in node.elts))
    if isinstance(node, ast.Dict):
        entries = []
        for k, v in zip(node.keys, node.values):
            if k is None:
                raise LiteralParseError("dict unpacking is not a literal", node.col_offset)
            entries.append((_from_ast(k), _from_ast(v)))
        return MapVal(tuple(entries))
    if isinstance(node, ast.Call):
        raise LiteralParseError("call in argument position", node.col_offset)
    raise LiteralParseError(f"non-literal argument ({type(node).__name__})", node.col_offset)


def parse_call_literals(call_text: str) -> CallSpec:
    """Parse exactly one `name(literal, ...)` call expression."""
    try:
        tree = ast.parse(call_text, mode="eval")
    except SyntaxError as exc:
        raise LiteralParseError(f"syntax error: {exc.msg}", exc.offset or 0) from None
    node = tree.body
    if not isinstance(node, ast.Call):
        raise LiteralParseError("expected a single call expression", node.col_offset)
    if not isinstance(node.func, ast.Name):
        raise LiteralParseError("callee must be a bare name", node.func.col_offset)
    if node.keywords:
        raise LiteralParseError("keyword arguments are not allowed", node.keywords[0].value.col_offset)
    return CallSpec(node.func.id, tuple(_from_ast(a) for a in node.args))


def parse_args_text(args_text: str) -> tuple[LiteralValue, ...]:
    """Parse a parenthesized argument list such as "(3,)" or "('a', [1])"."""
    stripped = args_text.strip()
    if not (stripped.startswith("(") and stripped.endswith(")")):
        raise LiteralParseError("argument list must be parenthesized", 0)
    return parse_call_literals(f"f{stripped}").args


def render_args(args: tuple[LiteralValue, ...] | list[LiteralValue]) -> str:
    """Canonical parenthesized argument list (1-tuple keeps trailing comma)."""
    if len(args) == 1:
        return f"({render_literal(args[0])},)"
    return f"({', '.join(render_literal(a) for a in args)})"


def render_literal(value: LiteralValue) -> str:
    """Canonical text; parse(render(v)) structurally equals v."""
    if isinstance(value, NoneVal):
        return "None"
    if isinstance(value, BoolVal):
        return repr(value.value)
    if isinstance(value, (IntVal, StrVal)):
        return repr(value.value)
    if isinstance(value, FloatVal):
        return repr(value.value)
    if isinstance(value, ListVal):
        return f"[{', '.join(render_literal(i) for i in value.items)}]"
    if isinstance(value, TupleVal):
        if len(value.items) == 1:
            return f"({render_literal(value.items[0])},)"
        return f"({', '.join(render_literal(i) for i in value.items)})"
    if isinstance(value, SetVal):
        return f"{{{', '.join(render_literal(i) for i in value.items)}}}"
    if isinstance(value, MapVal):
        body = ", ".join(f"{render_literal(k)}: {render_literal(v)}" for k, v in value.entries)
        return f"{{{body}}}"
    raise TypeError(f"not a LiteralValue: {value!r}")


def _mutate(value: LiteralValue, rng: random.Random) -> LiteralValue:
    if isinstance(value, StrVal):
        length = rng.randint(MUTANT_STRING_MIN, MUTANT_STRING_MAX)
        return StrVal("".join(rng.choice(STRING_CHARSET) for _ in range(length)))
    if isinstance(value, BoolVal):
        return value
    if isinstance(value, IntVal):
        return IntVal(value.value + rng.randint(-INT_MUTATION_RADIUS, INT_MUTATION_RADIUS))
    if isinstance(value, (FloatVal, NoneVal)):
        return value
    if isinstance(value, ListVal):
        return ListVal(tuple(_mutate(i, rng) for i in value.items))
    if isinstance(value, TupleVal):
        return TupleVal(tuple(_mutate(i, rng) for i in value.items))
    if isinstance(value, SetVal):
        return SetVal(tuple(_mutate(i, rng) for i in value.items))
    if isinstance(value, MapVal):
        # Keys stay fixed: mutating them risks key collisions and changes
        # which lookups the program exercises.
        return MapVal(tuple((k, _mutate(v, rng)) for k, v in value.entries))
    raise TypeError(f"not a LiteralValue: {value!r}")


def mutate_literal(value: LiteralValue, seed: int) -> LiteralValue:
    """Type-aware mutation, deterministic per seed; shape is preserved."""
    return _mutate(value, random.Random(seed))


def mutate_case(case, seed: int, count: int = 2) -> list:
    """Derive `count` input-mutated children of a TestCaseRecord.

    Children share code and entry point, carry mutant lineage, and have
    their expected output cleared for re-derivation by execution.
    """
    from dataclasses import replace

    from .records import RAW, Lineage

    if count <= 0:
        raise ValueError("count must be positive")
    spec = parse_call_literals(f"{case.entry_point}{case.input_literal.strip()}")
    children = []
    for k in range(count):
        child_seed = (seed * 1_000_003 + k) & (2**63 - 1)
        mutated = tuple(
            mutate_literal(arg, (child_seed * 31 + i) & (2**63 - 1)) for i, arg in enumerate(spec.args)
        )
        children.append(
            replace(
                case,
                id=f"{case.id}-m{k}",
                input_literal=render_args(mutated),
                expected_output_literal=None,
                lineage=Lineage.mutant(parent_id=case.id, seed=child_seed),
                status=RAW,
                discard_reason=None,
            )
        )
    return children

"""Built-in method catalog and per-method generation constraints.

The catalog is a static, versioned TSV shipped with the package (8 built-in
types). Constraint sampling is a pure function of (method, seed, max_depth),
so any generated case can be replayed from its provenance.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

CONTROL_KINDS = ("if", "while", "for")
DEFAULT_MAX_DEPTH = 3


class CatalogError(ValueError):
    """Raised when the catalog file cannot be parsed."""


@dataclass(frozen=True)
class MethodDescriptor:
    type_name: str
    method_name: str
    arity_hint: int = 0


@dataclass(frozen=True)
class ControlFlowBlueprint:
    """Nesting blueprint: sequence[k+1] is nested inside sequence[k]."""

    max_depth: int
    sequence: tuple[str, ...]

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if len(self.sequence) > self.max_depth:
            raise ValueError(
                f"sequence length {len(self.sequence)} exceeds max_depth {self.max_depth}"
            )
        for kind in self.sequence:
            if kind not in CONTROL_KINDS:
                raise ValueError(f"unknown control kind {kind!r}")


@dataclass(frozen=True)
class GenerationConstraints:
    base_method: MethodDescriptor
    use_nested_calls: bool
    use_other_methods: bool
    control_flow: ControlFlowBlueprint
    seed: int


def default_catalog_path() -> Path:
    return Path(str(resources.files("tracegen").joinpath("data/builtin_methods.tsv")))


def enumerate_targets(catalog_source: str | Path | None = None) -> list[MethodDescriptor]:
    """Parse the catalog file into descriptors, preserving file order.

    Lines are `type<TAB>method<TAB>arity`; blank lines and `#` comments are
    skipped. Duplicate (type, method) pairs or malformed lines raise
    CatalogError naming the offending line number.
    """
    path = Path(catalog_source) if catalog_source is not None else default_catalog_path()
    descriptors: list[MethodDescriptor] = []
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CatalogError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        type_name, method_name, arity_text = parts
        if not type_name.isidentifier() or not method_name.isidentifier():
            raise CatalogError(f"{path}:{lineno}: malformed identifier in {line!r}")
        try:
            arity = int(arity_text)
        except ValueError:
            raise CatalogError(f"{path}:{lineno}: arity_hint {arity_text!r} is not an integer") from None
        if arity < 0:
            raise CatalogError(f"{path}:{lineno}: arity_hint must be non-negative")
        key = (type_name, method_name)
        if key in seen:
            raise CatalogError(f"{path}:{lineno}: duplicate entry {key}")
        seen.add(key)
        descriptors.append(MethodDescriptor(type_name, method_name, arity))
    if not descriptors:
        raise CatalogError(f"{path}: catalog is empty")
    return descriptors


def _derive_rng(parts: Iterable[object]) -> random.Random:
    # Stable across processes; never use the built-in hash() here.
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"), digest_size=8)
    return random.Random(int.from_bytes(digest.digest(), "big"))


def control_blueprint(seed: int, max_depth: int) -> ControlFlowBlueprint:
    """Sample a blueprint: depth uniform on 0..max_depth, kinds uniform."""
    if max_depth < 0:
        raise ValueError(f"max_depth must be >= 0, got {max_depth}")
    rng = _derive_rng(["blueprint", seed, max_depth])
    depth = rng.randint(0, max_depth)
    sequence = tuple(rng.choice(CONTROL_KINDS) for _ in range(depth))
    return ControlFlowBlueprint(max_depth=max_depth, sequence=sequence)


def sample_constraints(
    method: MethodDescriptor, seed: int, max_depth: int = DEFAULT_MAX_DEPTH
) -> GenerationConstraints:
    """Sample the generation knobs for one method, deterministically per seed."""
    if max_depth < 0:
        raise ValueError(f"max_depth must be >= 0, got {max_depth}")
    rng = _derive_rng(["constraints", method.type_name, method.method_name, seed])
    use_nested_calls = rng.random() < 0.5
    use_other_methods = rng.random() < 0.5
    blueprint_seed = rng.getrandbits(63)
    return GenerationConstraints(
        base_method=method,
        use_nested_calls=use_nested_calls,
        use_other_methods=use_other_methods,
        control_flow=control_blueprint(blueprint_seed, max_depth),
        seed=seed,
    )

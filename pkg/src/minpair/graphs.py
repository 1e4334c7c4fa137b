"""Graphs of {0,1}-valued partial functions.

Two shapes cover everything the construction touches: finite explicit
graphs, and cofinite all-ones graphs (value 1 everywhere off a finite
exception set, undefined on it — the shape of a side's description at any
stage).  A graph is identified with its set of pair(n, value) codes, so
enumeration operators can consume either shape uniformly.  Values are
immutable; equality is structural on canonical forms (entries and
exception sets sorted).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .arith import unpair


@dataclass(frozen=True)
class ExplicitGraph:
    """Finite partial function listed point by point, sorted by point."""

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        seen: dict[int, int] = {}
        for n, v in self.entries:
            if n < 0 or v not in (0, 1):
                raise ValueError(f"bad graph entry {n} -> {v}")
            if n in seen:
                raise ValueError(f"point {n} mapped twice")
            seen[n] = v
        object.__setattr__(self, "_map", seen)

    @classmethod
    def from_map(cls, mapping: Mapping[int, int]) -> "ExplicitGraph":
        return cls(tuple(sorted(mapping.items())))

    def value_at(self, n: int) -> int | None:
        return self._map.get(n)  # type: ignore[attr-defined]

    def defined_below(self, bound: int) -> int:
        return sum(1 for n, _ in self.entries if n < bound)


@dataclass(frozen=True)
class CofiniteOnes:
    """Value 1 everywhere except a finite set of undefined points."""

    exceptions: tuple[int, ...]

    def __post_init__(self) -> None:
        exc = set()
        for n in self.exceptions:
            if n < 0:
                raise ValueError(f"exception point must be a natural, got {n}")
            exc.add(n)
        if len(exc) != len(self.exceptions) or list(self.exceptions) != sorted(exc):
            raise ValueError("exception set must be sorted and duplicate-free")
        object.__setattr__(self, "_exc", frozenset(exc))

    @classmethod
    def of(cls, exceptions: Iterable[int]) -> "CofiniteOnes":
        return cls(tuple(sorted(set(exceptions))))

    def value_at(self, n: int) -> int | None:
        return None if n in self._exc else 1  # type: ignore[attr-defined]

    def defined_below(self, bound: int) -> int:
        missing = sum(1 for n in self.exceptions if n < bound)
        return bound - missing


PartialGraph = Union[ExplicitGraph, CofiniteOnes]


def contains(graph: PartialGraph, code: int) -> bool:
    """Whether the pair coded by code lies on the graph."""
    n, v = unpair(code)
    return graph.value_at(n) == v


def extends(f: PartialGraph, g: PartialGraph) -> bool:
    """Whether g extends f, i.e. every pair on f's graph lies on g's."""
    if isinstance(f, ExplicitGraph):
        return all(g.value_at(n) == v for n, v in f.entries)
    if isinstance(g, CofiniteOnes):
        return set(g.exceptions) <= set(f.exceptions)
    # a cofinite graph never fits inside a finite one
    return False


@dataclass(frozen=True)
class DescriptionReport:
    """Result of checking a partial graph against a total bit sequence."""

    checked_bound: int
    error_points: tuple[int, ...]
    domain_partial_density: Fraction


def check_description(
    f: PartialGraph, bits: Sequence[int], bound: int
) -> DescriptionReport:
    """List every point below bound where f is defined but disagrees with
    bits, and measure the density of f's domain there."""
    if bound < 1:
        raise ValueError(f"bound must be >= 1, got {bound}")
    if len(bits) < bound:
        raise ValueError(f"bit sequence shorter than bound {bound}")
    errors = tuple(
        n
        for n in range(bound)
        if f.value_at(n) is not None and f.value_at(n) != bits[n]
    )
    density = Fraction(f.defined_below(bound), bound)
    return DescriptionReport(bound, errors, density)

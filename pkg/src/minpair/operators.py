"""Staged enumeration operators over partial-function graphs.

An operator is a finite table of axioms, each a finite premise set of pair
codes together with an output number, tagged with the stage at which it
first appears.  Evaluating on a graph at a stage returns every output whose
premise codes all lie on the graph; the use of an output is the least bound
strictly above every premise code of some witnessing axiom.  Evaluation is
monotone both in the stage (axiom tables only grow) and in the oracle
(larger graphs satisfy more premises).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .graphs import PartialGraph, contains


class OperatorValidationError(ValueError):
    """An axiom is visible before its premise could have been observed."""


@dataclass(frozen=True)
class Axiom:
    """Finite premise of codes (sorted, duplicate-free) and an output."""

    premise: tuple[int, ...]
    output: int

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.premise):
            raise ValueError("premise codes must be naturals")
        if list(self.premise) != sorted(set(self.premise)):
            raise ValueError("premise must be sorted and duplicate-free")
        if self.output < 0:
            raise ValueError("output must be a natural")

    @classmethod
    def of(cls, premise, output: int) -> "Axiom":
        return cls(tuple(sorted(set(premise))), output)

    @property
    def use(self) -> int:
        """Least bound strictly above every premise code (0 if empty)."""
        return self.premise[-1] + 1 if self.premise else 0


@dataclass(frozen=True)
class EnumOperator:
    """Axioms with their stages of first appearance, deduplicated."""

    staged_axioms: tuple[tuple[int, Axiom], ...]

    @classmethod
    def from_staged(cls, staged) -> "EnumOperator":
        first: dict[Axiom, int] = {}
        for stage, axiom in staged:
            if stage < 0:
                raise ValueError("stage must be a natural")
            if axiom not in first or stage < first[axiom]:
                first[axiom] = stage
        canonical = sorted(
            ((s, a) for a, s in first.items()),
            key=lambda sa: (sa[0], sa[1].output, sa[1].premise),
        )
        return cls(tuple(canonical))

    def axioms_at(self, stage: int) -> tuple[Axiom, ...]:
        return tuple(a for s, a in self.staged_axioms if s <= stage)


EMPTY_OPERATOR = EnumOperator(())


def validate_use_bound(op: EnumOperator) -> None:
    """Reject axioms visible at a stage smaller than their use.

    Construction-facing operators must respect the convention that nothing
    observed at stage s reaches beyond s; the restraint argument silently
    leans on it.
    """
    for stage, axiom in op.staged_axioms:
        if axiom.premise and axiom.use > stage:
            raise OperatorValidationError(
                f"axiom with premise max {axiom.premise[-1]} (use {axiom.use}) "
                f"visible at stage {stage}"
            )


@lru_cache(maxsize=4096)
def _satisfied(op: EnumOperator, graph: PartialGraph, stage: int):
    return tuple(
        a for a in op.axioms_at(stage) if all(contains(graph, c) for c in a.premise)
    )


def evaluate(op: EnumOperator, graph: PartialGraph, stage: int) -> frozenset[int]:
    """Outputs of every axiom visible at the stage whose premise lies on the
    graph."""
    return frozenset(a.output for a in _satisfied(op, graph, stage))


def use_of(op: EnumOperator, graph: PartialGraph, stage: int, output: int) -> int | None:
    """Least use over the satisfied axioms producing the output, or None if
    the output is not enumerated."""
    uses = [a.use for a in _satisfied(op, graph, stage) if a.output == output]
    return min(uses) if uses else None


def enumerate_outputs(
    op: EnumOperator, graph: PartialGraph, stage: int
) -> tuple[tuple[int, int], ...]:
    """All (output, use) pairs at the stage, sorted by output."""
    best: dict[int, int] = {}
    for a in _satisfied(op, graph, stage):
        if a.output not in best or a.use < best[a.output]:
            best[a.output] = a.use
    return tuple(sorted(best.items()))

"""Stage-by-stage finite-injury construction of the two membership sets.

At stage s the engine scans requirement pairs (e, side) in priority order
(position 2e + side, positions below s only) and lets the least eligible
pair act.  A pair is eligible when its valuation class meets the candidate
functional's stage-s domain nowhere inside the pair's current side, and the
class contains a witness, converged by stage s, exceeding every stronger
pair's restraint.  Acting inserts the least such witness into the pair's
side, removes every weaker insertion from the opposite side, and raises the
pair's restraint to s.  One action per stage, exactly; a stage with no
eligible pair records an empty event.

Membership indexing convention: the state entering stage s reflects all
actions of stages < s; a snapshot taken at stage s shows the state after
the stage's action.  Restraints are never lowered or reset.

The mutation hooks deliberately break one clause each (skip removals, skip
the restraint filter, remove from the wrong side) so the verification
checkers can be shown to catch real faults; they are for fault injection
only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .arith import class_members
from .graphs import CofiniteOnes
from .suites import FunctionalSuite

MUTATIONS = ("skip_removals", "skip_restraints", "wrong_removal_side")


@dataclass(frozen=True)
class Action:
    e: int
    side: int
    witness: int
    restraint: int

    @property
    def position(self) -> int:
        return 2 * self.e + self.side


@dataclass(frozen=True)
class Removal:
    n: int
    side: int
    by_e: int
    by_side: int
    inserted_at: int

    @property
    def by_position(self) -> int:
        return 2 * self.by_e + self.by_side


@dataclass(frozen=True)
class Snapshot:
    side0: tuple[int, ...]
    side1: tuple[int, ...]


@dataclass(frozen=True)
class TraceEvent:
    stage: int
    action: Action | None
    removals: tuple[Removal, ...]
    snapshot: Snapshot | None = None


@dataclass(frozen=True)
class TraceSummary:
    schema: int
    horizon: int
    side0: tuple[int, ...]
    side1: tuple[int, ...]
    restraints: tuple[tuple[int, int], ...]  # (position, value), sorted


@dataclass
class Trace:
    events: list[TraceEvent]
    summary: TraceSummary


TRACE_SCHEMA = 1


@dataclass
class MemberRecord:
    n: int
    e: int
    side: int
    inserted_at: int
    removed_at: int | None = None

    @property
    def position(self) -> int:
        return 2 * self.e + self.side


class SideState:
    """One side's membership with full per-element provenance."""

    def __init__(self) -> None:
        self.records: list[MemberRecord] = []
        self.current: dict[int, MemberRecord] = {}
        self.by_class: dict[int, set[int]] = {}

    def insert(self, n: int, e: int, side: int, stage: int) -> MemberRecord:
        if n in self.current:
            raise ValueError(f"{n} is already a member")
        rec = MemberRecord(n, e, side, stage)
        self.records.append(rec)
        self.current[n] = rec
        self.by_class.setdefault(e, set()).add(n)
        return rec

    def remove(self, n: int, stage: int) -> MemberRecord:
        rec = self.current.pop(n)
        rec.removed_at = stage
        self.by_class[rec.e].discard(n)
        return rec

    def members(self) -> tuple[int, ...]:
        return tuple(sorted(self.current))


class ConstructionState:
    """Stage counter, both sides, and the restraint table."""

    def __init__(self) -> None:
        self.stage = 0
        self.sides = (SideState(), SideState())
        self.restraints: dict[int, int] = {}

    def restraint(self, position: int) -> int:
        return self.restraints.get(position, 0)


def current_description(state: ConstructionState, side: int) -> CofiniteOnes:
    """The side's description graph: all ones off the current members."""
    return CofiniteOnes.of(state.sides[side].current)


def _find_actor(
    state: ConstructionState, suite: FunctionalSuite, mutation: str | None
) -> tuple[int, int, int, int] | None:
    """Least eligible (position, e, side, witness) at the current stage."""
    s = state.stage
    strongest = 0  # running max of restraints over positions already scanned
    for position in range(s):
        e, side = divmod(position, 2)
        bound = 0 if mutation == "skip_restraints" else strongest
        strongest = max(strongest, state.restraint(position))
        # the class already holds a member inside the candidate's domain
        held = state.sides[side].by_class.get(e, ())
        if any(suite.query(e, m, s) is not None for m in held):
            continue
        for n in class_members(e, s):
            if n <= bound:
                continue
            if suite.query(e, n, s) is not None:
                return position, e, side, n
    return None


def step(
    state: ConstructionState,
    suite: FunctionalSuite,
    mutation: str | None = None,
    take_snapshot: bool = False,
) -> TraceEvent:
    """Run one stage, mutating the state and returning its event."""
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation '{mutation}'")
    s = state.stage
    actor = _find_actor(state, suite, mutation)
    action = None
    removals: list[Removal] = []
    if actor is not None:
        position, e, side, witness = actor
        state.sides[side].insert(witness, e, side, s)
        target = side if mutation == "wrong_removal_side" else 1 - side
        if mutation != "skip_removals":
            victims = sorted(
                n
                for n, rec in state.sides[target].current.items()
                if rec.position > position
            )
            for n in victims:
                rec = state.sides[target].remove(n, s)
                removals.append(Removal(n, target, rec.e, rec.side, rec.inserted_at))
        state.restraints[position] = s
        action = Action(e, side, witness, s)
    snapshot = None
    if take_snapshot:
        snapshot = Snapshot(state.sides[0].members(), state.sides[1].members())
    state.stage = s + 1
    return TraceEvent(s, action, tuple(removals), snapshot)


def run(
    suite: FunctionalSuite,
    horizon: int,
    snapshot_every: int = 0,
    mutation: str | None = None,
    on_event=None,
) -> Trace:
    """Run the construction for the given number of stages.

    on_event, when given, receives each TraceEvent as it is produced so a
    persistence layer can stream the trace instead of buffering it.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    state = ConstructionState()
    events = []
    for s in range(horizon):
        snap = snapshot_every > 0 and s % snapshot_every == 0
        event = step(state, suite, mutation, take_snapshot=snap)
        events.append(event)
        if on_event is not None:
            on_event(event)
    summary = TraceSummary(
        schema=TRACE_SCHEMA,
        horizon=horizon,
        side0=state.sides[0].members(),
        side1=state.sides[1].members(),
        restraints=tuple(sorted(state.restraints.items())),
    )
    return Trace(events, summary)

"""Derived objects and machine checks over construction traces.

Everything here is read-only over a trace: replay reconstructs the
per-stage memberships and restraints, the checkers verify the structural
invariants the construction promises (class bounds, single entry, witness
and removal discipline, the opposite-side preservation lemma, quiescent
finite action), the capture and preservation checks confirm the two
behavioural guarantees at a finite horizon, and the joint table and
diagonal set are computed exactly as the run defines them.  reference_run
is a deliberately naive re-transcription of the stage rule that recomputes
every set from scratch at every stage; it exists purely to cross-validate
the engine trace for trace.

Indexing convention, shared with the engine: memberships entering stage s
reflect all actions of stages < s; entering[horizon] is the final state.
The preservation window for a joint output found at stage s opens just
after the first action (at a stage >= s) of the strongest pair acting at
any stage >= s, because that action's removals restore the opposite side
and its restraint then shields the restored premise.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .arith import class_index, class_members, partial_density, unpair
from .engine import (
    Action,
    Removal,
    Snapshot,
    Trace,
    TraceEvent,
    TraceSummary,
    TRACE_SCHEMA,
)
from .graphs import CofiniteOnes
from .operators import EnumOperator, evaluate
from .suites import FunctionalSuite, OperatorSuite


class TraceFormatError(ValueError):
    """The trace does not have the shape of a construction run."""


# ---------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class EventFacts:
    """Observations recorded while applying one event."""

    witness_was_member: bool
    removal_was_member: tuple[bool, ...]
    removal_provenance_ok: tuple[bool, ...]
    expected_removals: tuple[int, ...]


@dataclass
class ReplayedRun:
    horizon: int
    entering: list[tuple[frozenset[int], frozenset[int]]]
    restraints_entering: list[dict[int, int]]
    insert_counts: dict[tuple[int, int], int]
    facts: list[EventFacts]

    def members(self, stage: int, side: int) -> frozenset[int]:
        return self.entering[stage][side]

    def final(self) -> tuple[frozenset[int], frozenset[int]]:
        return self.entering[self.horizon]


def replay(trace: Trace) -> ReplayedRun:
    """Reconstruct per-stage state from the events alone.

    Permissive on content (forged traces replay too; the checkers judge
    them) but strict on shape: events must cover stages 0..horizon-1 in
    order.
    """
    horizon = trace.summary.horizon
    if len(trace.events) != horizon:
        raise TraceFormatError(
            f"trace has {len(trace.events)} events for horizon {horizon}"
        )
    cur: tuple[dict[int, tuple[int, int, int]], dict[int, tuple[int, int, int]]] = (
        {},
        {},
    )
    entering = []
    restraints_entering = []
    restraints: dict[int, int] = {}
    insert_counts: dict[tuple[int, int], int] = {}
    facts = []
    for idx, ev in enumerate(trace.events):
        if ev.stage != idx:
            raise TraceFormatError(f"event {idx} carries stage {ev.stage}")
        entering.append((frozenset(cur[0]), frozenset(cur[1])))
        restraints_entering.append(dict(restraints))
        witness_was_member = False
        expected: tuple[int, ...] = ()
        if ev.action is not None:
            act = ev.action
            if act.side not in (0, 1) or act.witness < 0 or act.e < 0:
                raise TraceFormatError(f"event {idx}: malformed action fields")
            witness_was_member = act.witness in cur[act.side]
            cur[act.side][act.witness] = (act.e, act.side, ev.stage)
            key = (act.side, act.witness)
            insert_counts[key] = insert_counts.get(key, 0) + 1
            restraints[act.position] = act.restraint
            opposite = cur[1 - act.side]
            expected = tuple(
                sorted(
                    n
                    for n, (e, side, _) in opposite.items()
                    if 2 * e + side > act.position
                )
            )
        was_member = []
        provenance_ok = []
        for rm in ev.removals:
            rec = cur[rm.side].get(rm.n) if rm.side in (0, 1) else None
            was_member.append(rec is not None)
            provenance_ok.append(rec == (rm.by_e, rm.by_side, rm.inserted_at))
            if rec is not None:
                del cur[rm.side][rm.n]
        facts.append(
            EventFacts(witness_was_member, tuple(was_member), tuple(provenance_ok), expected)
        )
    entering.append((frozenset(cur[0]), frozenset(cur[1])))
    restraints_entering.append(dict(restraints))
    return ReplayedRun(horizon, entering, restraints_entering, insert_counts, facts)


# ---------------------------------------------------------------------------
# verification reports


@dataclass(frozen=True)
class CheckResult:
    name: str
    verdict: str  # "pass" | "fail" | "inconclusive"
    detail: tuple[tuple[str, object], ...] = ()

    @classmethod
    def of(cls, name: str, verdict: str, **detail) -> "CheckResult":
        return cls(name, verdict, tuple(sorted(detail.items())))


@dataclass
class VerificationReport:
    checks: tuple[CheckResult, ...]
    meta: tuple[tuple[str, object], ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.verdict != "fail" for c in self.checks)

    def find(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _report(checks: list[CheckResult], **meta) -> VerificationReport:
    return VerificationReport(
        tuple(sorted(checks, key=lambda c: c.name)), tuple(sorted(meta.items()))
    )


# ---------------------------------------------------------------------------
# structural checks


def _stronger_restraint_bound(restraints: Mapping[int, int], position: int) -> int:
    return max((v for q, v in restraints.items() if q < position), default=0)


def check_structural(trace: Trace, suite: FunctionalSuite | None = None) -> VerificationReport:
    """Verify every structural invariant of a run against its full trace.

    With a suite, witness discipline additionally confirms each witness was
    converged and its class held no converged member at the action stage.
    """
    rep = replay(trace)
    T = rep.horizon
    checks: list[CheckResult] = []

    # event shape: removals only ride on actions; snapshots match replay
    shape_bad = None
    for ev in trace.events:
        if ev.action is None and ev.removals:
            shape_bad = {"stage": ev.stage, "reason": "removals without action"}
            break
        if ev.snapshot is not None:
            post = rep.entering[ev.stage + 1]
            if ev.snapshot.side0 != tuple(sorted(post[0])) or ev.snapshot.side1 != tuple(
                sorted(post[1])
            ):
                shape_bad = {"stage": ev.stage, "reason": "snapshot disagrees with replay"}
                break
    checks.append(
        CheckResult.of("event_shape", "fail" if shape_bad else "pass", **(shape_bad or {}))
    )

    # summary must equal the replayed final state
    final0, final1 = rep.final()
    summary_ok = (
        trace.summary.side0 == tuple(sorted(final0))
        and trace.summary.side1 == tuple(sorted(final1))
        and trace.summary.restraints == tuple(sorted(rep.restraints_entering[T].items()))
    )
    checks.append(CheckResult.of("replay_summary", "pass" if summary_ok else "fail"))

    # per-class bound: at most one member of each valuation class per side
    bound_bad = None
    for s in range(T + 1):
        for side in (0, 1):
            per_class: dict[int | None, int] = {}
            for n in rep.entering[s][side]:
                e = class_index(n)
                per_class[e] = per_class.get(e, 0) + 1
                if e is None or per_class[e] > 1:
                    bound_bad = {"stage": s, "side": side, "class": e}
                    break
            if bound_bad:
                break
        if bound_bad:
            break
    checks.append(
        CheckResult.of("class_bound", "fail" if bound_bad else "pass", **(bound_bad or {}))
    )

    # single entry: an element enters a given side at most once, so each
    # membership changes at most twice over the run
    multi = sorted(
        (side, n) for (side, n), c in rep.insert_counts.items() if c > 1
    )
    checks.append(
        CheckResult.of(
            "dce_single_entry",
            "fail" if multi else "pass",
            **({"side": multi[0][0], "n": multi[0][1]} if multi else {}),
        )
    )

    # witness discipline
    witness_bad = None
    for ev in trace.events:
        if ev.action is None:
            continue
        act = ev.action
        s = ev.stage
        fact = rep.facts[s]
        entering = rep.entering[s]
        bound = _stronger_restraint_bound(rep.restraints_entering[s], act.position)
        if act.position >= s:
            witness_bad = {"stage": s, "reason": "pair position not below stage"}
        elif class_index(act.witness) != act.e:
            witness_bad = {"stage": s, "reason": "witness outside its class"}
        elif fact.witness_was_member:
            witness_bad = {"stage": s, "reason": "witness already a member"}
        elif act.witness <= bound:
            witness_bad = {"stage": s, "reason": "witness under a stronger restraint"}
        elif suite is not None and suite.query(act.e, act.witness, s) is None:
            witness_bad = {"stage": s, "reason": "witness not converged"}
        elif suite is not None and any(
            class_index(m) == act.e and suite.query(act.e, m, s) is not None
            for m in entering[act.side]
        ):
            witness_bad = {"stage": s, "reason": "class already satisfied"}
        if witness_bad:
            break
    checks.append(
        CheckResult.of(
            "witness_discipline", "fail" if witness_bad else "pass", **(witness_bad or {})
        )
    )

    # restraint discipline: set to exactly the acting stage, only by actions
    restraint_bad = None
    for ev in trace.events:
        if ev.action is not None and ev.action.restraint != ev.stage:
            restraint_bad = {"stage": ev.stage, "recorded": ev.action.restraint}
            break
    checks.append(
        CheckResult.of(
            "restraint_discipline",
            "fail" if restraint_bad else "pass",
            **(restraint_bad or {}),
        )
    )

    # removal discipline: each removal hits a current opposite-side member
    # inserted earlier by a strictly weaker pair, and no victim is missed
    removal_bad = None
    for ev in trace.events:
        if removal_bad:
            break
        if ev.action is None:
            continue
        fact = rep.facts[ev.stage]
        for i, rm in enumerate(ev.removals):
            if rm.side != 1 - ev.action.side:
                removal_bad = {"stage": ev.stage, "n": rm.n, "reason": "wrong side"}
            elif rm.by_position <= ev.action.position:
                removal_bad = {"stage": ev.stage, "n": rm.n, "reason": "removed a stronger insertion"}
            elif rm.inserted_at >= ev.stage:
                removal_bad = {"stage": ev.stage, "n": rm.n, "reason": "inserted_at not earlier"}
            elif not fact.removal_was_member[i]:
                removal_bad = {"stage": ev.stage, "n": rm.n, "reason": "not a current member"}
            elif not fact.removal_provenance_ok[i]:
                removal_bad = {"stage": ev.stage, "n": rm.n, "reason": "provenance mismatch"}
            if removal_bad:
                break
        if removal_bad:
            break
        recorded = tuple(rm.n for rm in ev.removals)
        if recorded != tuple(sorted(recorded)):
            removal_bad = {"stage": ev.stage, "reason": "removals not in canonical order"}
        elif recorded != fact.expected_removals:
            removal_bad = {
                "stage": ev.stage,
                "reason": "removals disagree with weaker opposite-side members",
            }
    checks.append(
        CheckResult.of(
            "removal_discipline", "fail" if removal_bad else "pass", **(removal_bad or {})
        )
    )

    # key lemma: after an action at stage t by pair p, the opposite side is
    # contained in its state at every stage s <= t back to the last stronger
    # action; equivalently the stage-s description extends to the post-t one
    lemma_bad = None
    action_stages = [(ev.stage, ev.action.position, ev.action.side) for ev in trace.events if ev.action]
    for t, p, side in action_stages:
        s_min = 0
        for u, q, _ in action_stages:
            if u <= t and q < p:
                s_min = max(s_min, u + 1)
        post = rep.entering[t + 1][1 - side]
        for s in range(s_min, t + 1):
            if not post <= rep.entering[s][1 - side]:
                lemma_bad = {"stage": t, "since": s, "side": 1 - side}
                break
        if lemma_bad:
            break
    checks.append(
        CheckResult.of("key_lemma", "fail" if lemma_bad else "pass", **(lemma_bad or {}))
    )

    # finite action: once every stronger pair has stopped, a pair acts at
    # most once more
    finite_bad = None
    positions = sorted({p for _, p, _ in action_stages})
    for p in positions:
        stronger_last = max((u for u, q, _ in action_stages if q < p), default=-1)
        late = [u for u, q, _ in action_stages if q == p and u > stronger_last]
        if len(late) > 1:
            finite_bad = {"position": p, "stages": tuple(late)}
            break
    checks.append(
        CheckResult.of("finite_action", "fail" if finite_bad else "pass", **(finite_bad or {}))
    )

    return _report(checks, horizon=T, kind="structural")


# ---------------------------------------------------------------------------
# capture check (a side eventually meets a candidate's domain in its class)


def check_capture(
    trace: Trace, suite: FunctionalSuite, e: int, side: int, horizon: int
) -> VerificationReport:
    """Finite form of the capture guarantee for requirement (e, side).

    If, at some stage s after every stronger pair has gone quiet for the
    rest of the run, the class holds a converged witness above every
    stronger restraint, then by the horizon the side must hold a converged
    class member.  The stage-s condition (rather than horizon-only
    visibility) is what the stage rule actually guarantees: a witness first
    converging at the final stage leaves no stage to act on it.  Without
    such a stage the verdict is inconclusive, not a failure.
    """
    rep = replay(trace)
    if horizon > rep.horizon:
        raise ValueError(f"trace reaches {rep.horizon}, asked for {horizon}")
    position = 2 * e + side
    action_stages = [(ev.stage, ev.action.position) for ev in trace.events if ev.action]
    last_stronger = max((u for u, q in action_stages if q < position), default=-1)
    for s in range(max(position, last_stronger) + 1, horizon):
        bound = _stronger_restraint_bound(rep.restraints_entering[s], position)
        eligible = [
            n
            for n in class_members(e, s)
            if n > bound and suite.query(e, n, s) is not None
        ]
        if not eligible:
            continue
        captured = sorted(
            m
            for m in rep.entering[horizon][side]
            if class_index(m) == e and suite.query(e, m, horizon) is not None
        )
        if captured:
            return _report(
                [
                    CheckResult.of(
                        "capture", "pass", witness=captured[0], actionable_stage=s
                    )
                ],
                e=e,
                side=side,
                horizon=horizon,
            )
        return _report(
            [
                CheckResult.of(
                    "capture",
                    "fail",
                    actionable_stage=s,
                    eligible=tuple(eligible),
                )
            ],
            e=e,
            side=side,
            horizon=horizon,
        )
    return _report(
        [CheckResult.of("capture", "inconclusive", reason="no actionable stage in horizon")],
        e=e,
        side=side,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# preservation check (a jointly enumerated output survives on one side)


def _side_graphs(rep: ReplayedRun) -> tuple[list[CofiniteOnes], list[CofiniteOnes]]:
    g0 = [CofiniteOnes.of(rep.entering[s][0]) for s in range(rep.horizon + 1)]
    g1 = [CofiniteOnes.of(rep.entering[s][1]) for s in range(rep.horizon + 1)]
    return g0, g1


def _joint_by_stage(
    rep: ReplayedRun, w0: EnumOperator, w1: EnumOperator, horizon: int
) -> list[frozenset[int]]:
    g0, g1 = _side_graphs(rep)
    return [
        evaluate(w0, g0[s], s) & evaluate(w1, g1[s], s) for s in range(horizon + 1)
    ]


def check_preservation(
    trace: Trace, operators: OperatorSuite, e0: int, e1: int, horizon: int
) -> VerificationReport:
    """Every output jointly enumerated at some stage stays enumerated on at
    least one side from its protection stage through the horizon.

    The protection stage is the first action stage >= s of the strongest
    pair acting at any stage >= s (the window opens just after it); if no
    pair acts again the window opens at s itself.
    """
    rep = replay(trace)
    if horizon > rep.horizon:
        raise ValueError(f"trace reaches {rep.horizon}, asked for {horizon}")
    w0, w1 = operators.get(e0), operators.get(e1)
    g0, g1 = _side_graphs(rep)
    joint = [evaluate(w0, g0[s], s) & evaluate(w1, g1[s], s) for s in range(horizon + 1)]
    found: dict[int, int] = {}
    for s in range(horizon + 1):
        for x in joint[s]:
            found.setdefault(x, s)
    action_stages = [(ev.stage, ev.action.position) for ev in trace.events if ev.action]
    for x in sorted(found):
        s = found[x]
        acting = [(q, u) for u, q in action_stages if u >= s]
        if acting:
            q_min = min(q for q, _ in acting)
            t_protect = min(u for q, u in acting if q == q_min)
            start = t_protect + 1
        else:
            start = s
        first_bad: list[int | None] = [None, None]
        for j, (w, g) in enumerate(((w0, g0), (w1, g1))):
            for u in range(start, horizon + 1):
                if x not in evaluate(w, g[u], u):
                    first_bad[j] = u
                    break
        if first_bad[0] is not None and first_bad[1] is not None:
            return _report(
                [
                    CheckResult.of(
                        "preservation",
                        "fail",
                        output=x,
                        found_at=s,
                        violated_at=max(first_bad[0], first_bad[1]),
                        window_start=start,
                    )
                ],
                e0=e0,
                e1=e1,
                horizon=horizon,
            )
    return _report(
        [CheckResult.of("preservation", "pass", outputs=len(found))],
        e0=e0,
        e1=e1,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# joint description table


@dataclass
class JointTable:
    e0: int
    e1: int
    horizon: int
    entries: dict[int, tuple[int, int]]  # n -> (bit, found_at_stage)

    def rows(self) -> list[tuple[int, int, int]]:
        return [(n, k, s) for n, (k, s) in sorted(self.entries.items())]


def synthesize_joint(
    trace: Trace, operators: OperatorSuite, e0: int, e1: int, horizon: int
) -> JointTable:
    """Search stages for codes enumerated by both sides at once.

    For each input the first stage wins; if both bits appear at the same
    first stage the smaller bit is kept (any fixed choice is sound because
    preservation makes every jointly enumerated bit correct).
    """
    rep = replay(trace)
    if horizon > rep.horizon:
        raise ValueError(f"trace reaches {rep.horizon}, asked for {horizon}")
    joint = _joint_by_stage(rep, operators.get(e0), operators.get(e1), horizon)
    entries: dict[int, tuple[int, int]] = {}
    for s in range(horizon + 1):
        best_here: dict[int, int] = {}
        for code in joint[s]:
            n, k = unpair(code)
            if k <= 1 and (n not in best_here or k < best_here[n]):
                best_here[n] = k
        for n, k in best_here.items():
            entries.setdefault(n, (k, s))
    return JointTable(e0, e1, horizon, entries)


# ---------------------------------------------------------------------------
# diagonal set


@dataclass(frozen=True)
class DiagonalSet:
    side: int
    horizon: int
    bound: int
    bits: tuple[int, ...]
    disagreements: tuple[tuple[int, int, int], ...]  # (n, candidate bit, own bit)


def derive_diagonal(
    trace: Trace, suite: FunctionalSuite, side: int, horizon: int, bound: int
) -> DiagonalSet:
    """Bits disagree with the candidate on captured members, 1 elsewhere.

    Also reports every point below the bound where the point's class
    candidate has converged to a different bit — the realized evidence that
    the candidate does not describe this set.
    """
    rep = replay(trace)
    if horizon > rep.horizon:
        raise ValueError(f"trace reaches {rep.horizon}, asked for {horizon}")
    members = rep.entering[horizon][side]
    bits = []
    disagreements = []
    for n in range(bound):
        e = class_index(n)
        candidate = suite.query(e, n, horizon) if e is not None else None
        if n in members and candidate is not None:
            bits.append(1 - candidate)
        else:
            bits.append(1)
        if candidate is not None and candidate != bits[n]:
            disagreements.append((n, candidate, bits[n]))
    return DiagonalSet(side, horizon, bound, tuple(bits), tuple(disagreements))


# ---------------------------------------------------------------------------
# end-to-end check


def check_end_to_end(
    trace: Trace,
    operators: OperatorSuite,
    e0: int,
    e1: int,
    horizon: int,
    bound: int,
    target_bits: Sequence[int],
    threshold: Fraction,
) -> VerificationReport:
    """Every defined joint-table bit matches the target, and the table's
    domain below the bound is at least as dense as the threshold."""
    if len(target_bits) < bound:
        raise ValueError(f"target bits shorter than bound {bound}")
    table = synthesize_joint(trace, operators, e0, e1, horizon)
    defined = [n for n in table.entries if n < bound]
    mismatches = sorted(
        (n, table.entries[n][0], target_bits[n])
        for n in defined
        if table.entries[n][0] != target_bits[n]
    )
    checks = [
        CheckResult.of(
            "values_match",
            "fail" if mismatches else "pass",
            **(
                {"n": mismatches[0][0], "got": mismatches[0][1], "want": mismatches[0][2]}
                if mismatches
                else {"defined": len(defined)}
            ),
        )
    ]
    density = partial_density(defined, bound)
    checks.append(
        CheckResult.of(
            "domain_density",
            "pass" if density >= threshold else "fail",
            density=str(density),
            threshold=str(threshold),
        )
    )
    return _report(checks, e0=e0, e1=e1, bound=bound, horizon=horizon)


# ---------------------------------------------------------------------------
# naive reference oracle


def _members_from_events(events: list[TraceEvent], side: int) -> dict[int, tuple[int, int, int]]:
    """Replay membership of one side from scratch: n -> (e, side, stage)."""
    members: dict[int, tuple[int, int, int]] = {}
    for ev in events:
        if ev.action is not None and ev.action.side == side:
            members[ev.action.witness] = (ev.action.e, ev.action.side, ev.stage)
        for rm in ev.removals:
            if rm.side == side:
                members.pop(rm.n, None)
    return members


def reference_run(
    suite: FunctionalSuite, horizon: int, snapshot_every: int = 0
) -> Trace:
    """Direct, unoptimized transcription of the stage rule.

    Recomputes memberships, provenance, and restraints from the event
    history at every stage instead of carrying state; quadratic and proud
    of it.  Must produce a trace identical to the engine's.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    events: list[TraceEvent] = []
    for s in range(horizon):
        sides = (_members_from_events(events, 0), _members_from_events(events, 1))
        restraint_map: dict[int, int] = {}
        for ev in events:
            if ev.action is not None:
                restraint_map[ev.action.position] = ev.action.restraint
        chosen = None
        for position in range(s):
            e, side = divmod(position, 2)
            bound = max((restraint_map.get(q, 0) for q in range(position)), default=0)
            satisfied = False
            for m in sides[side]:
                if class_index(m) == e and suite.query(e, m, s) is not None:
                    satisfied = True
                    break
            if satisfied:
                continue
            for n in class_members(e, s):
                if n > bound and suite.query(e, n, s) is not None:
                    chosen = (position, e, side, n)
                    break
            if chosen:
                break
        action = None
        removals: list[Removal] = []
        if chosen:
            position, e, side, witness = chosen
            action = Action(e, side, witness, s)
            opposite = sides[1 - side]
            for n in sorted(opposite):
                by_e, by_side, inserted_at = opposite[n]
                if 2 * by_e + by_side > position:
                    removals.append(Removal(n, 1 - side, by_e, by_side, inserted_at))
        snapshot = None
        if snapshot_every > 0 and s % snapshot_every == 0:
            post = (dict(sides[0]), dict(sides[1]))
            if action is not None:
                post[action.side][action.witness] = (action.e, action.side, s)
                for rm in removals:
                    post[rm.side].pop(rm.n, None)
            snapshot = Snapshot(tuple(sorted(post[0])), tuple(sorted(post[1])))
        events.append(TraceEvent(s, action, tuple(removals), snapshot))
    final = (_members_from_events(events, 0), _members_from_events(events, 1))
    restraint_map = {}
    for ev in events:
        if ev.action is not None:
            restraint_map[ev.action.position] = ev.action.restraint
    summary = TraceSummary(
        schema=TRACE_SCHEMA,
        horizon=horizon,
        side0=tuple(sorted(final[0])),
        side1=tuple(sorted(final[1])),
        restraints=tuple(sorted(restraint_map.items())),
    )
    return Trace(events, summary)

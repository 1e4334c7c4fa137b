from __future__ import annotations

from fractions import Fraction

import pytest

from conftest import make_suites
from minpair import engine
from minpair.analysis import (
    TraceFormatError,
    check_capture,
    check_end_to_end,
    check_preservation,
    check_structural,
    derive_diagonal,
    reference_run,
    replay,
    synthesize_joint,
)
from minpair.arith import pair
from minpair.cli import trace_lines
from minpair.operators import evaluate
from minpair.engine import Action, Removal, Trace, TraceEvent, TraceSummary
from minpair.graphs import CofiniteOnes, check_description


def const_suite(value=0, horizon=5):
    raw = {
        "horizon": horizon,
        "suite": {"functionals": [{"kind": "total_const", "value": value}], "operators": []},
    }
    return make_suites(raw)[0]


def ops_suite(specs, horizon=20):
    raw = {
        "horizon": horizon,
        "suite": {"functionals": [{"kind": "total_const", "value": 0}], "operators": specs},
    }
    return make_suites(raw)


def axioms(*rows):
    return {
        "kind": "axioms",
        "axioms": [{"stage": s, "premise": p, "output": o} for s, p, o in rows],
    }


def forged(events, side0=(), side1=(), restraints=(), horizon=None):
    horizon = len(events) if horizon is None else horizon
    return Trace(
        events,
        TraceSummary(1, horizon, tuple(side0), tuple(side1), tuple(restraints)),
    )


def empty_events(stages):
    return [TraceEvent(s, None, ()) for s in stages]


# -- replay ------------------------------------------------------------------


def test_replay_entering_series(scenario_suite, scenario_trace):
    rep = replay(scenario_trace)
    assert rep.entering[0] == (frozenset(), frozenset())
    assert rep.entering[3] == (frozenset({1}), frozenset())
    assert rep.entering[5] == (frozenset({1}), frozenset({3}))
    assert rep.restraints_entering[4] == {0: 2}
    assert rep.restraints_entering[5] == {0: 2, 1: 4}


def test_replay_rejects_event_count_mismatch(scenario_trace):
    bad = Trace(scenario_trace.events[:3], scenario_trace.summary)
    with pytest.raises(TraceFormatError):
        replay(bad)
    renumbered = [TraceEvent(9, ev.action, ev.removals) for ev in scenario_trace.events]
    with pytest.raises(TraceFormatError):
        replay(Trace(renumbered, scenario_trace.summary))


# -- structural checks on genuine and forged traces ---------------------------


def test_structural_passes_on_genuine_trace(scenario_suite, scenario_trace):
    report = check_structural(scenario_trace, scenario_suite)
    assert report.passed
    assert {c.verdict for c in report.checks} == {"pass"}


def test_structural_flags_double_insertion():
    events = empty_events(range(2))
    events.append(TraceEvent(2, Action(0, 0, 1, 2), ()))
    events.append(TraceEvent(3, None, ()))
    events.append(TraceEvent(4, Action(0, 0, 1, 4), ()))
    trace = forged(events, side0=(1,), restraints=((0, 4),))
    report = check_structural(trace)
    assert report.find("dce_single_entry").verdict == "fail"
    assert dict(report.find("dce_single_entry").detail) == {"side": 0, "n": 1}


def test_structural_flags_stronger_removal():
    events = empty_events(range(2))
    events.append(TraceEvent(2, Action(0, 0, 1, 2), ()))
    events.append(TraceEvent(3, None, ()))
    events.append(
        TraceEvent(4, Action(0, 1, 3, 4), (Removal(1, 0, 0, 0, 2),))
    )
    trace = forged(events, side1=(3,), restraints=((0, 2), (1, 4)))
    report = check_structural(trace)
    bad = report.find("removal_discipline")
    assert bad.verdict == "fail"
    assert dict(bad.detail)["reason"] == "removed a stronger insertion"


def test_structural_flags_missing_removal_and_key_lemma():
    events = empty_events(range(4))
    events.append(TraceEvent(4, Action(1, 1, 2, 4), ()))
    events.append(TraceEvent(5, Action(0, 0, 1, 5), ()))  # should have removed 2
    trace = forged(events, side0=(1,), side1=(2,), restraints=((0, 5), (3, 4)))
    report = check_structural(trace)
    assert report.find("key_lemma").verdict == "fail"
    assert report.find("removal_discipline").verdict == "fail"


def test_structural_flags_restraint_mismatch():
    events = empty_events(range(2))
    events.append(TraceEvent(2, Action(0, 0, 1, 3), ()))
    trace = forged(events, side0=(1,), restraints=((0, 3),))
    report = check_structural(trace)
    assert report.find("restraint_discipline").verdict == "fail"


def test_structural_flags_summary_mismatch(scenario_trace):
    trace = Trace(
        scenario_trace.events,
        TraceSummary(1, 5, (1, 9), (3,), ((0, 2), (1, 4))),
    )
    report = check_structural(trace)
    assert report.find("replay_summary").verdict == "fail"


def test_structural_flags_removals_without_action(scenario_trace):
    events = list(scenario_trace.events)
    events[3] = TraceEvent(3, None, (Removal(1, 0, 0, 0, 2),))
    report = check_structural(forged(events, side1=(3,), restraints=((0, 2), (1, 4))))
    assert report.find("event_shape").verdict == "fail"


def test_structural_flags_witness_under_restraint(scenario_suite):
    events = empty_events(range(2))
    events.append(TraceEvent(2, Action(0, 0, 1, 2), ()))
    events.append(TraceEvent(3, Action(0, 1, 1, 3), ()))  # 1 <= restraint 2
    trace = forged(events, side0=(1,), side1=(1,), restraints=((0, 2), (1, 3)))
    report = check_structural(trace, scenario_suite)
    bad = report.find("witness_discipline")
    assert bad.verdict == "fail"
    assert dict(bad.detail)["reason"] == "witness under a stronger restraint"


def test_structural_mutation_sweep():
    fsuite, _ = make_suites(
        {
            "horizon": 50,
            "suite": {
                "functionals": [
                    {"kind": "table_partial", "entries": [[1, 1, 40]]},
                    {"kind": "table_partial", "entries": [[2, 1, 5], [6, 1, 35]]},
                ],
                "operators": [],
            },
        }
    )
    expected_failures = {
        "skip_removals": "removal_discipline",
        "wrong_removal_side": "removal_discipline",
        "skip_restraints": "witness_discipline",
    }
    for mutation, name in expected_failures.items():
        trace = engine.run(fsuite, 50, mutation=mutation)
        report = check_structural(trace, fsuite)
        assert not report.passed
        assert report.find(name).verdict == "fail", mutation


# -- capture check -----------------------------------------------------------


def test_capture_scenario_witness(scenario_suite, scenario_trace):
    report = check_capture(scenario_trace, scenario_suite, 0, 0, 5)
    check = report.find("capture")
    assert check.verdict == "pass"
    assert dict(check.detail)["witness"] == 1


def test_capture_inconclusive_when_divergent():
    fsuite, _ = make_suites(
        {"horizon": 10, "suite": {"functionals": [{"kind": "empty"}], "operators": []}}
    )
    trace = engine.run(fsuite, 10)
    report = check_capture(trace, fsuite, 0, 0, 10)
    assert report.find("capture").verdict == "inconclusive"


def test_capture_inconclusive_at_small_horizon(scenario_suite):
    trace = engine.run(scenario_suite, 1)
    report = check_capture(trace, scenario_suite, 0, 0, 1)
    assert report.find("capture").verdict == "inconclusive"


def test_capture_fails_on_idle_forged_trace(scenario_suite):
    trace = forged(empty_events(range(5)))
    report = check_capture(trace, scenario_suite, 0, 0, 5)
    check = report.find("capture")
    assert check.verdict == "fail"
    assert dict(check.detail)["actionable_stage"] == 2


# -- preservation check --------------------------------------------------------


def test_preservation_unconditional_axioms():
    fsuite, osuite = ops_suite(
        [axioms((0, [], 42)), axioms((0, [], 42))], horizon=6
    )
    trace = engine.run(fsuite, 6)
    report = check_preservation(trace, osuite, 0, 1, 6)
    check = report.find("preservation")
    assert check.verdict == "pass"
    assert dict(check.detail)["outputs"] == 1


def test_preservation_vacuous_when_premise_breaks_before_visibility():
    # side-0 premise on point 1 becomes visible at stage 5 but 1 joins side 0
    # at stage 2, so the joint enumeration never fires
    fsuite, osuite = ops_suite(
        [axioms((5, [[1, 1]], 42)), axioms((0, [], 42))], horizon=8
    )
    trace = engine.run(fsuite, 8)
    report = check_preservation(trace, osuite, 0, 1, 8)
    assert report.find("preservation").verdict == "pass"
    assert dict(report.find("preservation").detail)["outputs"] == 0


def injury_case():
    raw = {
        "horizon": 50,
        "suite": {
            "functionals": [
                {"kind": "table_partial", "entries": [[1, 1, 40]]},
                {"kind": "table_partial", "entries": [[2, 1, 5], [6, 1, 35]]},
            ],
            "operators": [
                axioms((8, [[1, 1]], 42)),
                axioms((30, [[6, 1]], 42)),
            ],
        },
    }
    return make_suites(raw)


def test_preservation_survives_injury_through_removal():
    fsuite, osuite = injury_case()
    trace = engine.run(fsuite, 50)
    report = check_preservation(trace, osuite, 0, 1, 50)
    assert report.find("preservation").verdict == "pass"
    assert dict(report.find("preservation").detail)["outputs"] == 1


def test_preservation_fails_without_removals():
    fsuite, osuite = injury_case()
    trace = engine.run(fsuite, 50, mutation="skip_removals")
    report = check_preservation(trace, osuite, 0, 1, 50)
    check = report.find("preservation")
    assert check.verdict == "fail"
    detail = dict(check.detail)
    assert detail["output"] == 42
    assert detail["found_at"] == 30
    assert detail["violated_at"] == 41


def test_preservation_fails_with_wrong_removal_side():
    fsuite, osuite = injury_case()
    trace = engine.run(fsuite, 50, mutation="wrong_removal_side")
    assert check_preservation(trace, osuite, 0, 1, 50).find("preservation").verdict == "fail"


def test_preservation_fails_without_restraints():
    raw = {
        "horizon": 30,
        "suite": {
            "functionals": [
                {"kind": "table_partial", "entries": [[1, 1, 10]]},
                {"kind": "table_partial", "entries": [[2, 1, 20]]},
            ],
            "operators": [
                axioms((5, [[1, 1]], 42)),
                axioms((8, [[2, 1]], 42)),
            ],
        },
    }
    fsuite, osuite = make_suites(raw)
    honest = engine.run(fsuite, 30)
    assert check_preservation(honest, osuite, 0, 1, 30).find("preservation").verdict == "pass"
    mutated = engine.run(fsuite, 30, mutation="skip_restraints")
    check = check_preservation(mutated, osuite, 0, 1, 30).find("preservation")
    assert check.verdict == "fail"
    assert dict(check.detail)["found_at"] == 8


def test_preservation_requires_trace_to_reach_horizon(scenario_trace):
    _, osuite = ops_suite([axioms((0, [], 1)), axioms((0, [], 1))])
    with pytest.raises(ValueError):
        check_preservation(scenario_trace, osuite, 0, 1, 9)


# -- joint table ---------------------------------------------------------------


def test_joint_unconditional_entry():
    fsuite, osuite = ops_suite(
        [axioms((0, [], [5, 1])), axioms((0, [], [5, 1]))], horizon=6
    )
    trace = engine.run(fsuite, 6)
    table = synthesize_joint(trace, osuite, 0, 1, 6)
    assert table.entries == {5: (1, 0)}


def test_joint_waits_for_both_sides():
    # side 0 offers (5,0) from stage 3; side 1 offers (5,1) at 3 and (5,0)
    # only at stage 10, so the joint entry lands at stage 10 with bit 0
    fsuite, osuite = ops_suite(
        [axioms((3, [], [5, 0])), axioms((3, [], [5, 1]), (10, [], [5, 0]))],
        horizon=12,
    )
    trace = engine.run(fsuite, 12)
    table = synthesize_joint(trace, osuite, 0, 1, 12)
    assert table.entries == {5: (0, 10)}
    assert table.rows() == [(5, 0, 10)]


def test_joint_tie_breaks_to_least_bit():
    fsuite, osuite = ops_suite(
        [
            axioms((2, [], [5, 0]), (2, [], [5, 1])),
            axioms((2, [], [5, 0]), (2, [], [5, 1])),
        ],
        horizon=6,
    )
    trace = engine.run(fsuite, 6)
    table = synthesize_joint(trace, osuite, 0, 1, 6)
    assert table.entries == {5: (0, 2)}


def test_joint_ignores_unsatisfied_premises():
    fsuite, osuite = ops_suite(
        [axioms((13, [[2, 0]], [5, 1])), axioms((0, [], [5, 1]))], horizon=16
    )
    # the premise wants value 0 at 2, but side graphs only ever carry ones
    trace = engine.run(fsuite, 16)
    table = synthesize_joint(trace, osuite, 0, 1, 16)
    assert table.entries == {}


def test_joint_ignores_outputs_decoding_to_large_bits():
    fsuite, osuite = ops_suite(
        [axioms((0, [], [5, 2])), axioms((0, [], [5, 2]))], horizon=4
    )
    trace = engine.run(fsuite, 4)
    assert synthesize_joint(trace, osuite, 0, 1, 4).entries == {}


# -- diagonal set ---------------------------------------------------------------


def test_diagonal_constant_zero_candidate(scenario_suite, scenario_trace):
    diag = derive_diagonal(scenario_trace, scenario_suite, 0, 5, 8)
    assert diag.bits == (1,) * 8  # flipping 0 at the captured witness gives 1
    assert (1, 0, 1) in diag.disagreements
    # every odd point converged by the horizon realizes the disagreement
    assert [n for n, _, _ in diag.disagreements] == [1, 3]


def test_diagonal_constant_one_candidate():
    fsuite = const_suite(value=1)
    trace = engine.run(fsuite, 5)
    diag = derive_diagonal(trace, fsuite, 0, 5, 8)
    assert diag.bits[1] == 0  # captured witness flips the constant-one candidate
    assert diag.bits[0] == 1 and diag.bits[2] == 1
    assert (1, 1, 0) in diag.disagreements


def test_diagonal_empty_suite_is_all_ones():
    fsuite, _ = make_suites(
        {"horizon": 5, "suite": {"functionals": [], "operators": []}}
    )
    trace = engine.run(fsuite, 5)
    diag = derive_diagonal(trace, fsuite, 0, 5, 10)
    assert diag.bits == (1,) * 10
    assert diag.disagreements == ()


def test_diagonal_agrees_with_description(scenario_suite, scenario_trace):
    rep = replay(scenario_trace)
    for side in (0, 1):
        diag = derive_diagonal(scenario_trace, scenario_suite, side, 5, 16)
        graph = CofiniteOnes.of(rep.entering[5][side])
        report = check_description(graph, diag.bits, 16)
        assert report.error_points == ()
        members = len([n for n in rep.entering[5][side] if n < 16])
        assert report.domain_partial_density == Fraction(16 - members, 16)


# -- end-to-end check ------------------------------------------------------------


def test_end_to_end_parity():
    rows0 = [(3, [[0, 1]], [n, n % 2]) for n in range(40) if n % 8 != 0]
    rows1 = [(8, [[2, 1]], [n, n % 2]) for n in range(40) if n % 8 != 0]
    fsuite, osuite = ops_suite([axioms(*rows0), axioms(*rows1)], horizon=10)
    trace = engine.run(fsuite, 10)
    target = [n % 2 for n in range(40)]
    report = check_end_to_end(trace, osuite, 0, 1, 10, 40, target, Fraction(8, 10))
    assert report.passed
    assert dict(report.find("domain_density").detail)["density"] == "7/8"


def test_end_to_end_flags_wrong_bit():
    fsuite, osuite = ops_suite(
        [axioms((0, [], [5, 0])), axioms((0, [], [5, 0]))], horizon=4
    )
    trace = engine.run(fsuite, 4)
    target = [1] * 10
    report = check_end_to_end(trace, osuite, 0, 1, 4, 10, target, Fraction(0))
    assert report.find("values_match").verdict == "fail"
    assert dict(report.find("values_match").detail) == {"n": 5, "got": 0, "want": 1}


def test_end_to_end_one_sided_wrong_pair_never_joins():
    # one side emits the wrong bit for 5; the intersection stays empty there
    fsuite, osuite = ops_suite(
        [axioms((0, [], [5, 0])), axioms((0, [], [5, 1]))], horizon=4
    )
    trace = engine.run(fsuite, 4)
    report = check_end_to_end(trace, osuite, 0, 1, 4, 10, [1] * 10, Fraction(0))
    assert report.find("values_match").verdict == "pass"
    assert dict(report.find("values_match").detail)["defined"] == 0


def test_joint_entries_survive_on_some_side_when_preservation_holds():
    fsuite, osuite = injury_case()
    trace = engine.run(fsuite, 50)
    assert check_preservation(trace, osuite, 0, 1, 50).passed
    table = synthesize_joint(trace, osuite, 0, 1, 50)
    final = replay(trace).entering[50]
    for n, (k, _) in table.entries.items():
        code = pair(n, k)
        held = [
            e
            for e, side in ((0, 0), (1, 1))
            if code in evaluate(osuite.get(e), CofiniteOnes.of(final[side]), 50)
        ]
        assert held


def test_capture_witness_realizes_a_disagreement(scenario_suite, scenario_trace):
    check = check_capture(scenario_trace, scenario_suite, 0, 0, 5).find("capture")
    assert check.verdict == "pass"
    witness = dict(check.detail)["witness"]
    candidate = scenario_suite.query(0, witness, 5)
    assert candidate is not None
    diag = derive_diagonal(scenario_trace, scenario_suite, 0, 5, witness + 1)
    assert candidate != diag.bits[witness]


# -- reference oracle ------------------------------------------------------------


def test_reference_run_horizon_zero(scenario_suite):
    trace = reference_run(scenario_suite, 0)
    assert trace.events == []
    assert trace.summary.side0 == ()


def test_reference_matches_engine_on_injury_scenario():
    fsuite, _ = injury_case()
    assert trace_lines(reference_run(fsuite, 50)) == trace_lines(engine.run(fsuite, 50))


def test_reference_matches_engine_with_snapshots(scenario_suite):
    a = engine.run(scenario_suite, 5, snapshot_every=2)
    b = reference_run(scenario_suite, 5, snapshot_every=2)
    assert trace_lines(a) == trace_lines(b)

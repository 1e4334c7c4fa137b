"""Command-line surface: run constructions, verify traces, print joint tables.

Config files are strict JSON: unknown fields are rejected so experiment
files stay self-documenting.  Traces are line-delimited JSON, one
self-contained event record per line in canonical key order followed by a
summary record carrying a schema version; identical configs produce
byte-identical files.  Exit codes: 0 all checks pass (inconclusive does not
fail), 1 a check failed, 2 config or runtime error, 3 malformed trace.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import engine
from .analysis import (
    CheckResult,
    TraceFormatError,
    VerificationReport,
    check_capture,
    check_end_to_end,
    check_preservation,
    check_structural,
    reference_run,
    synthesize_joint,
)
from .engine import Action, Removal, Snapshot, Trace, TraceEvent, TraceSummary, TRACE_SCHEMA
from .suites import (
    FunctionalSuite,
    OperatorSuite,
    ProbeGrid,
    SpecError,
    SuiteValidationError,
    build_suite,
    compile_functional,
    compile_operator,
    default_probe,
)


class ConfigError(ValueError):
    """The config file violates the documented schema."""


def _is_nat(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


# ---------------------------------------------------------------------------
# config schema


@dataclass(frozen=True)
class EndToEndSpec:
    e0: int
    e1: int
    bound: int
    threshold: Fraction
    target: tuple[tuple[str, object], ...]  # normalized tagged record

    def target_bits(self) -> list[int]:
        spec = dict(self.target)
        if spec["kind"] == "parity":
            return [n & 1 for n in range(self.bound)]
        if spec["kind"] == "const":
            return [spec["value"]] * self.bound  # type: ignore[list-item]
        return list(spec["values"])[: self.bound]  # type: ignore[arg-type]


@dataclass
class RunConfig:
    horizon: int
    snapshot_every: int = 0
    seed: int = 0
    functionals: list = field(default_factory=list)
    operators: list = field(default_factory=list)
    probe: tuple[int, int] | None = None  # (points, stages)
    capture_checks: list = field(default_factory=list)  # [(e, side)]
    preservation_checks: list = field(default_factory=list)  # [(e0, e1)]
    end_to_end_checks: list = field(default_factory=list)  # [EndToEndSpec]

    def to_json_obj(self) -> dict:
        obj: dict = {
            "horizon": self.horizon,
            "snapshot_every": self.snapshot_every,
            "seed": self.seed,
            "suite": {"functionals": self.functionals, "operators": self.operators},
        }
        if self.probe is not None:
            obj["probe"] = {"points": self.probe[0], "stages": self.probe[1]}
        checks: dict = {}
        if self.capture_checks:
            checks["capture"] = [{"e": e, "side": side} for e, side in self.capture_checks]
        if self.preservation_checks:
            checks["preservation"] = [
                {"e0": e0, "e1": e1} for e0, e1 in self.preservation_checks
            ]
        if self.end_to_end_checks:
            checks["end_to_end"] = [
                {
                    "e0": s.e0,
                    "e1": s.e1,
                    "bound": s.bound,
                    "threshold": str(s.threshold),
                    "target": dict(s.target),
                }
                for s in self.end_to_end_checks
            ]
        if checks:
            obj["checks"] = checks
        return obj


def _expect_fields(obj: dict, path: str, required: set[str], optional: set[str]) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: must be an object")
    unknown = sorted(set(obj) - required - optional)
    if unknown:
        raise ConfigError(f"{path}: unknown field '{unknown[0]}'")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{path}: missing field '{missing[0]}'")


def _parse_target(raw, path: str) -> tuple[tuple[str, object], ...]:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError(f"{path}: target must be a tagged object")
    kind = raw["kind"]
    if kind == "parity":
        _expect_fields(raw, path, {"kind"}, set())
        return (("kind", "parity"),)
    if kind == "const":
        _expect_fields(raw, path, {"kind", "value"}, set())
        if raw["value"] not in (0, 1) or isinstance(raw["value"], bool):
            raise ConfigError(f"{path}.value: must be a bit")
        return (("kind", "const"), ("value", raw["value"]))
    if kind == "bits":
        _expect_fields(raw, path, {"kind", "values"}, set())
        values = raw["values"]
        if not isinstance(values, list) or not all(
            v in (0, 1) and not isinstance(v, bool) for v in values
        ):
            raise ConfigError(f"{path}.values: must be a list of bits")
        return (("kind", "bits"), ("values", tuple(values)))
    raise ConfigError(f"{path}: unknown kind '{kind}'")


def parse_config(text: str) -> RunConfig:
    """Strictly parse and validate a config document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"line {err.lineno} column {err.colno}: {err.msg}") from None
    _expect_fields(
        raw, "config", {"horizon", "suite"}, {"snapshot_every", "seed", "probe", "checks"}
    )
    if not _is_nat(raw["horizon"]):
        raise ConfigError("config.horizon: must be >= 0")
    snapshot_every = raw.get("snapshot_every", 0)
    if not _is_nat(snapshot_every):
        raise ConfigError("config.snapshot_every: must be >= 0")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("config.seed: must be an integer")

    suite = raw["suite"]
    _expect_fields(suite, "config.suite", {"functionals"}, {"operators"})
    functionals = suite["functionals"]
    operators = suite.get("operators", [])
    if not isinstance(functionals, list):
        raise ConfigError("config.suite.functionals: must be a list")
    if not isinstance(operators, list):
        raise ConfigError("config.suite.operators: must be a list")
    for i, spec in enumerate(functionals):
        try:
            compile_functional(spec, seed)
        except SpecError as err:
            raise ConfigError(f"config.suite.functionals[{i}]: {err}") from None
    for i, spec in enumerate(operators):
        try:
            compile_operator(spec, 4)  # shape check only; real bound set at build
        except SpecError as err:
            raise ConfigError(f"config.suite.operators[{i}]: {err}") from None

    probe = None
    if "probe" in raw:
        _expect_fields(raw["probe"], "config.probe", {"points", "stages"}, set())
        if not _is_nat(raw["probe"]["points"]) or not _is_nat(raw["probe"]["stages"]):
            raise ConfigError("config.probe: points and stages must be naturals")
        probe = (raw["probe"]["points"], raw["probe"]["stages"])

    capture_checks: list = []
    preservation_checks: list = []
    end_to_end_checks: list = []
    if "checks" in raw:
        _expect_fields(
            raw["checks"], "config.checks", set(), {"capture", "preservation", "end_to_end"}
        )
        for i, entry in enumerate(raw["checks"].get("capture", [])):
            path = f"config.checks.capture[{i}]"
            _expect_fields(entry, path, {"e", "side"}, set())
            if not _is_nat(entry["e"]) or entry["side"] not in (0, 1):
                raise ConfigError(f"{path}: e must be a natural and side a bit")
            capture_checks.append((entry["e"], entry["side"]))
        for i, entry in enumerate(raw["checks"].get("preservation", [])):
            path = f"config.checks.preservation[{i}]"
            _expect_fields(entry, path, {"e0", "e1"}, set())
            if not _is_nat(entry["e0"]) or not _is_nat(entry["e1"]):
                raise ConfigError(f"{path}: e0 and e1 must be naturals")
            preservation_checks.append((entry["e0"], entry["e1"]))
        for i, entry in enumerate(raw["checks"].get("end_to_end", [])):
            path = f"config.checks.end_to_end[{i}]"
            _expect_fields(entry, path, {"e0", "e1", "bound", "threshold", "target"}, set())
            if not _is_nat(entry["e0"]) or not _is_nat(entry["e1"]):
                raise ConfigError(f"{path}: e0 and e1 must be naturals")
            if not _is_nat(entry["bound"]) or entry["bound"] < 1:
                raise ConfigError(f"{path}.bound: must be >= 1")
            try:
                threshold = Fraction(str(entry["threshold"]))
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"{path}.threshold: not a rational") from None
            target = _parse_target(entry["target"], f"{path}.target")
            if dict(target)["kind"] == "bits" and len(dict(target)["values"]) < entry["bound"]:
                raise ConfigError(f"{path}: target bits shorter than bound")
            end_to_end_checks.append(
                EndToEndSpec(entry["e0"], entry["e1"], entry["bound"], threshold, target)
            )

    return RunConfig(
        horizon=raw["horizon"],
        snapshot_every=snapshot_every,
        seed=seed,
        functionals=functionals,
        operators=operators,
        probe=probe,
        capture_checks=capture_checks,
        preservation_checks=preservation_checks,
        end_to_end_checks=end_to_end_checks,
    )


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.to_json_obj(), sort_keys=True, indent=2) + "\n"


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def build_suites(config: RunConfig) -> tuple[FunctionalSuite, OperatorSuite]:
    probe = (
        ProbeGrid(points=config.probe[0], stages=config.probe[1])
        if config.probe is not None
        else default_probe(config.horizon)
    )
    return build_suite(
        config.functionals,
        config.operators,
        config.horizon,
        probe=probe,
        default_seed=config.seed,
    )


# ---------------------------------------------------------------------------
# trace persistence


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _event_record(ev: TraceEvent) -> dict:
    action = None
    if ev.action is not None:
        action = {
            "e": ev.action.e,
            "side": ev.action.side,
            "witness": ev.action.witness,
            "restraint": ev.action.restraint,
        }
    snapshot = None
    if ev.snapshot is not None:
        snapshot = {"side0": list(ev.snapshot.side0), "side1": list(ev.snapshot.side1)}
    return {
        "stage": ev.stage,
        "action": action,
        "removals": [
            {
                "n": rm.n,
                "side": rm.side,
                "by_e": rm.by_e,
                "by_side": rm.by_side,
                "inserted_at": rm.inserted_at,
            }
            for rm in ev.removals
        ],
        "snapshot": snapshot,
    }


def _summary_line(summary: TraceSummary) -> str:
    return _canon(
        {
            "summary": {
                "schema": summary.schema,
                "horizon": summary.horizon,
                "side0": list(summary.side0),
                "side1": list(summary.side1),
                "restraints": [[p, v] for p, v in summary.restraints],
            }
        }
    )


def trace_lines(trace: Trace) -> list[str]:
    lines = [_canon(_event_record(ev)) for ev in trace.events]
    lines.append(_summary_line(trace.summary))
    return lines


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text("\n".join(trace_lines(trace)) + "\n", encoding="utf-8")


def _decode_action(raw, where: str) -> Action | None:
    if raw is None:
        return None
    if not isinstance(raw, dict) or set(raw) != {"e", "side", "witness", "restraint"}:
        raise TraceFormatError(f"{where}: malformed action record")
    if not all(_is_nat(raw[k]) for k in ("e", "witness", "restraint")) or raw["side"] not in (0, 1):
        raise TraceFormatError(f"{where}: malformed action fields")
    return Action(raw["e"], raw["side"], raw["witness"], raw["restraint"])


def _decode_event(raw, where: str) -> TraceEvent:
    if not isinstance(raw, dict) or set(raw) != {"stage", "action", "removals", "snapshot"}:
        raise TraceFormatError(f"{where}: malformed event record")
    if not _is_nat(raw["stage"]):
        raise TraceFormatError(f"{where}: stage must be a natural")
    action = _decode_action(raw["action"], where)
    if not isinstance(raw["removals"], list):
        raise TraceFormatError(f"{where}: removals must be a list")
    removals = []
    for rm in raw["removals"]:
        if not isinstance(rm, dict) or set(rm) != {"n", "side", "by_e", "by_side", "inserted_at"}:
            raise TraceFormatError(f"{where}: malformed removal record")
        if (
            not all(_is_nat(rm[k]) for k in ("n", "by_e", "inserted_at"))
            or rm["side"] not in (0, 1)
            or rm["by_side"] not in (0, 1)
        ):
            raise TraceFormatError(f"{where}: malformed removal fields")
        removals.append(Removal(rm["n"], rm["side"], rm["by_e"], rm["by_side"], rm["inserted_at"]))
    snapshot = None
    if raw["snapshot"] is not None:
        snap = raw["snapshot"]
        if not isinstance(snap, dict) or set(snap) != {"side0", "side1"}:
            raise TraceFormatError(f"{where}: malformed snapshot record")
        for key in ("side0", "side1"):
            if not isinstance(snap[key], list) or not all(_is_nat(n) for n in snap[key]):
                raise TraceFormatError(f"{where}: malformed snapshot members")
        snapshot = Snapshot(tuple(snap["side0"]), tuple(snap["side1"]))
    return TraceEvent(raw["stage"], action, tuple(removals), snapshot)


def read_trace(path: str | Path) -> Trace:
    text = Path(path).read_text(encoding="utf-8")
    events: list[TraceEvent] = []
    summary: TraceSummary | None = None
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        where = f"line {i + 1}"
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as err:
            raise TraceFormatError(f"{where}: {err.msg}") from None
        if summary is not None:
            raise TraceFormatError(f"{where}: records after the summary line")
        if isinstance(raw, dict) and "summary" in raw:
            if set(raw) != {"summary"}:
                raise TraceFormatError(f"{where}: malformed summary record")
            body = raw["summary"]
            want = {"schema", "horizon", "side0", "side1", "restraints"}
            if not isinstance(body, dict) or set(body) != want:
                raise TraceFormatError(f"{where}: malformed summary record")
            if body["schema"] != TRACE_SCHEMA:
                raise TraceFormatError(f"{where}: unsupported schema {body['schema']}")
            if not _is_nat(body["horizon"]):
                raise TraceFormatError(f"{where}: malformed horizon")
            for key in ("side0", "side1"):
                if not isinstance(body[key], list) or not all(_is_nat(n) for n in body[key]):
                    raise TraceFormatError(f"{where}: malformed summary members")
            restraints = body["restraints"]
            if not isinstance(restraints, list) or not all(
                isinstance(rv, list) and len(rv) == 2 and _is_nat(rv[0]) and _is_nat(rv[1])
                for rv in restraints
            ):
                raise TraceFormatError(f"{where}: malformed restraints")
            summary = TraceSummary(
                schema=body["schema"],
                horizon=body["horizon"],
                side0=tuple(body["side0"]),
                side1=tuple(body["side1"]),
                restraints=tuple((p, v) for p, v in restraints),
            )
        else:
            events.append(_decode_event(raw, where))
    if summary is None:
        raise TraceFormatError("missing summary line")
    return Trace(events, summary)


# ---------------------------------------------------------------------------
# report persistence


def report_json_obj(report: VerificationReport) -> dict:
    def plain(value):
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        return value

    return {
        "checks": [
            {"name": c.name, "verdict": c.verdict, "detail": {k: plain(v) for k, v in c.detail}}
            for c in report.checks
        ],
        "meta": {k: plain(v) for k, v in report.meta},
    }


def serialize_report(report: VerificationReport) -> str:
    return json.dumps(report_json_obj(report), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands

KNOWN_CHECKS = ("structural", "oracle", "capture", "preservation", "end_to_end")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    fsuite, _ = build_suites(config)
    with open(args.out, "w", encoding="utf-8") as fh:
        trace = engine.run(
            fsuite,
            config.horizon,
            config.snapshot_every,
            on_event=lambda ev: fh.write(_canon(_event_record(ev)) + "\n"),
        )
        fh.write(_summary_line(trace.summary) + "\n")
    return 0


def _cmd_verify(args) -> int:
    config = load_config(args.config)
    trace = read_trace(args.trace)
    if trace.summary.horizon != config.horizon:
        raise ConfigError(
            f"trace horizon {trace.summary.horizon} does not match config horizon {config.horizon}"
        )
    fsuite, osuite = build_suites(config)
    if args.checks is None:
        selected = {"structural", "oracle"}
        if config.capture_checks:
            selected.add("capture")
        if config.preservation_checks:
            selected.add("preservation")
        if config.end_to_end_checks:
            selected.add("end_to_end")
    else:
        selected = {name.strip() for name in args.checks.split(",") if name.strip()}
        unknown = selected - set(KNOWN_CHECKS)
        if unknown:
            raise ConfigError(f"unknown check '{sorted(unknown)[0]}'")
        selected.add("structural")

    results: list[CheckResult] = []
    structural = check_structural(trace, fsuite)
    results.extend(
        CheckResult(f"structural:{c.name}", c.verdict, c.detail) for c in structural.checks
    )
    if "oracle" in selected:
        ref = reference_run(fsuite, config.horizon, config.snapshot_every)
        same = trace_lines(ref) == trace_lines(trace)
        results.append(
            CheckResult.of("oracle_equivalence", "pass" if same else "fail")
        )
    if "capture" in selected:
        if not config.capture_checks:
            raise ConfigError("capture selected but config.checks.capture is empty")
        for e, side in config.capture_checks:
            sub = check_capture(trace, fsuite, e, side, config.horizon)
            results.extend(
                CheckResult(f"capture[e={e},side={side}]", c.verdict, c.detail)
                for c in sub.checks
            )
    if "preservation" in selected:
        if not config.preservation_checks:
            raise ConfigError("preservation selected but config.checks.preservation is empty")
        for e0, e1 in config.preservation_checks:
            sub = check_preservation(trace, osuite, e0, e1, config.horizon)
            results.extend(
                CheckResult(f"preservation[e0={e0},e1={e1}]", c.verdict, c.detail)
                for c in sub.checks
            )
    if "end_to_end" in selected:
        if not config.end_to_end_checks:
            raise ConfigError("end_to_end selected but config.checks.end_to_end is empty")
        for spec in config.end_to_end_checks:
            sub = check_end_to_end(
                trace,
                osuite,
                spec.e0,
                spec.e1,
                config.horizon,
                spec.bound,
                spec.target_bits(),
                spec.threshold,
            )
            results.extend(
                CheckResult(
                    f"end_to_end[e0={spec.e0},e1={spec.e1}]:{c.name}", c.verdict, c.detail
                )
                for c in sub.checks
            )

    report = VerificationReport(
        tuple(sorted(results, key=lambda c: c.name)),
        (("config", str(args.config)), ("horizon", config.horizon), ("trace", str(args.trace))),
    )
    text = serialize_report(report)
    if args.report is not None:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if report.passed else 1


def _cmd_psi(args) -> int:
    config = load_config(args.config)
    trace = read_trace(args.trace)
    _, osuite = build_suites(config)
    table = synthesize_joint(trace, osuite, args.e0, args.e1, trace.summary.horizon)
    for n, k, s in table.rows():
        if n < args.bound:
            sys.stdout.write(_canon({"k": k, "n": n, "stage": s}) + "\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="minpair",
        description="Run the finite-injury construction and verify its traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a construction and write its trace")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_verify = sub.add_parser("verify", help="check a trace against its config")
    p_verify.add_argument("--trace", required=True)
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--checks", default=None, help="comma-separated subset of: " + ",".join(KNOWN_CHECKS))
    p_verify.add_argument("--report", default=None)
    p_psi = sub.add_parser("psi", help="print the joint description table of a trace")
    p_psi.add_argument("--trace", required=True)
    p_psi.add_argument("--config", required=True)
    p_psi.add_argument("--e0", type=int, required=True)
    p_psi.add_argument("--e1", type=int, required=True)
    p_psi.add_argument("--bound", type=int, required=True)
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "verify": _cmd_verify, "psi": _cmd_psi}
    try:
        return handlers[args.command](args)
    except TraceFormatError as err:
        print(f"minpair: malformed trace: {err}", file=sys.stderr)
        return 3
    except (ConfigError, SpecError, SuiteValidationError) as err:
        print(f"minpair: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"minpair: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

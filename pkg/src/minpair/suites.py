"""Indexed families of staged candidate functionals and operators.

Functional entries answer stage-bounded queries query(n, s) -> bit or None
under two hard conventions: nothing converges unless n < s, and convergence
is stable (once converged, the same bit at every later stage).  Entries are
written in a small synthetic description language (tagged records, parsed
from config files) or as register-machine programs run with a step budget
equal to the stage.  build_suite compiles a whole family and validates the
conventions on a probe grid; operators are additionally checked for the
use-within-stage bound.  Absent indices behave as everywhere divergent.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .arith import class_index, pair, unpair
from .operators import (
    EMPTY_OPERATOR,
    Axiom,
    EnumOperator,
    OperatorValidationError,
    validate_use_bound,
)


class SpecError(ValueError):
    """A synthetic description is malformed."""


class SuiteValidationError(ValueError):
    """A compiled entry violates a suite convention on the probe grid."""


# ---------------------------------------------------------------------------
# register machine


@dataclass(frozen=True)
class Instruction:
    op: str  # "inc" | "decjz" | "halt"
    reg: int = 0
    target: int = 0


def run_machine(
    program: tuple[Instruction, ...], value: int, max_steps: int
) -> tuple[bool, int, int]:
    """Run with register 0 = value and a step budget.

    Returns (halted, steps_used, output_bit); output is register 0 mod 2.
    Running off either end of the program halts.  Halting is stable: a
    larger budget never changes the outcome of a halted run.
    """
    regs: dict[int, int] = {0: value}
    pc = 0
    steps = 0
    while steps < max_steps:
        if pc < 0 or pc >= len(program):
            return True, steps, regs.get(0, 0) & 1
        ins = program[pc]
        steps += 1
        if ins.op == "halt":
            return True, steps, regs.get(0, 0) & 1
        if ins.op == "inc":
            regs[ins.reg] = regs.get(ins.reg, 0) + 1
            pc += 1
        else:  # decjz
            if regs.get(ins.reg, 0) == 0:
                pc = ins.target
            else:
                regs[ins.reg] -= 1
                pc += 1
    if pc < 0 or pc >= len(program):
        return True, steps, regs.get(0, 0) & 1
    return False, steps, 0


def parse_program(raw) -> tuple[Instruction, ...]:
    """Decode ["inc", r] / ["decjz", r, addr] / ["halt"] records."""
    if not isinstance(raw, list):
        raise SpecError("program must be a list of instructions")
    out = []
    for i, ins in enumerate(raw):
        if not isinstance(ins, list) or not ins or not isinstance(ins[0], str):
            raise SpecError(f"instruction {i} must be a tagged list")
        op = ins[0]
        if op == "halt":
            if len(ins) != 1:
                raise SpecError(f"instruction {i}: halt takes no operands")
            out.append(Instruction("halt"))
        elif op == "inc":
            if len(ins) != 2 or not _is_nat(ins[1]):
                raise SpecError(f"instruction {i}: inc takes one register")
            out.append(Instruction("inc", ins[1]))
        elif op == "decjz":
            if len(ins) != 3 or not _is_nat(ins[1]) or not _is_nat(ins[2]):
                raise SpecError(f"instruction {i}: decjz takes register and address")
            out.append(Instruction("decjz", ins[1], ins[2]))
        else:
            raise SpecError(f"instruction {i}: unknown opcode '{op}'")
    return tuple(out)


def _is_nat(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _is_bit(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x in (0, 1)


# ---------------------------------------------------------------------------
# functional kinds


class StagedFunctional:
    """Base: gates every query on n < s, then asks the kind for the bit."""

    def query(self, n: int, s: int) -> int | None:
        if n < 0 or s < 0:
            raise ValueError(f"query arguments must be naturals, got ({n}, {s})")
        if n >= s:
            return None
        return self._bit_at(n, s)

    def _bit_at(self, n: int, s: int) -> int | None:
        raise NotImplementedError


class TotalConst(StagedFunctional):
    def __init__(self, value: int):
        self.value = value

    def _bit_at(self, n, s):
        return self.value


class TotalFn(StagedFunctional):
    """Finite table of bits continued by a fill rule beyond its end."""

    def __init__(self, table: tuple[int, ...], fill: str):
        if fill not in ("cycle", "zero", "one"):
            raise SpecError(f"unknown fill rule '{fill}'")
        if fill == "cycle" and not table:
            raise SpecError("cycle fill needs a nonempty table")
        self.table = table
        self.fill = fill

    def _bit_at(self, n, s):
        if n < len(self.table):
            return self.table[n]
        if self.fill == "cycle":
            return self.table[n % len(self.table)]
        return 0 if self.fill == "zero" else 1


class UndefinedOnClass(StagedFunctional):
    """Diverges exactly on one valuation class, constant elsewhere."""

    def __init__(self, e: int, value: int = 1):
        self.e = e
        self.value = value

    def _bit_at(self, n, s):
        return None if class_index(n) == self.e else self.value


class Delayed(StagedFunctional):
    """Postpones an inner functional: nothing converges at stages <= a*n + b."""

    def __init__(self, inner: StagedFunctional, a: int, b: int):
        self.inner = inner
        self.a = a
        self.b = b

    def _bit_at(self, n, s):
        if s <= self.a * n + self.b:
            return None
        return self.inner.query(n, s)


class RandomPartial(StagedFunctional):
    """Pseudo-random domain of a target density, deterministic per seed."""

    def __init__(self, density: float, rule: str, seed: int):
        if not 0.0 <= density <= 1.0:
            raise SpecError(f"density must lie in [0,1], got {density}")
        if rule not in ("zero", "one", "parity", "random"):
            raise SpecError(f"unknown value rule '{rule}'")
        self.density = density
        self.rule = rule
        self.seed = seed
        self._cache: dict[int, int | None] = {}

    def _bit_at(self, n, s):
        if n not in self._cache:
            rng = random.Random(f"rp:{self.seed}:{n}")
            if rng.random() >= self.density:
                self._cache[n] = None
            elif self.rule == "zero":
                self._cache[n] = 0
            elif self.rule == "one":
                self._cache[n] = 1
            elif self.rule == "parity":
                self._cache[n] = n & 1
            else:
                self._cache[n] = rng.getrandbits(1)
        return self._cache[n]


class EmptyFunctional(StagedFunctional):
    def _bit_at(self, n, s):
        return None


class TablePartial(StagedFunctional):
    """Explicit finite domain with a per-point first visible stage."""

    def __init__(self, entries: dict[int, tuple[int, int]]):
        self.entries = dict(entries)

    def _bit_at(self, n, s):
        hit = self.entries.get(n)
        if hit is None:
            return None
        bit, visible_from = hit
        return bit if s >= visible_from else None


class UnstableProbe(StagedFunctional):
    """Converges at exactly one stage, then withdraws.

    Deliberately violates stability; exists so the build validation has a
    concrete offender to flag.
    """

    def __init__(self, point: int, at_stage: int, value: int = 0):
        self.point = point
        self.at_stage = at_stage
        self.value = value

    def _bit_at(self, n, s):
        return self.value if n == self.point and s == self.at_stage else None


class MachineFunctional(StagedFunctional):
    """Runs a register machine with step budget s; output bit is r0 mod 2."""

    def __init__(self, program: tuple[Instruction, ...]):
        self.program = program
        self._cache: dict[int, tuple[int, int | None, int]] = {}

    def _bit_at(self, n, s):
        tried, halt_steps, out = self._cache.get(n, (-1, None, 0))
        if halt_steps is None and s > tried:
            halted, steps, out = run_machine(self.program, n, s)
            halt_steps = steps if halted else None
            self._cache[n] = (s, halt_steps, out)
        if halt_steps is not None and halt_steps <= s:
            return out
        return None


# ---------------------------------------------------------------------------
# tagged-record compilation

_FUNCTIONAL_FIELDS = {
    "total_const": {"value"},
    "total_fn": {"table", "fill"},
    "undefined_on_class": {"e", "value"},
    "delayed": {"inner", "delay"},
    "random_partial": {"density", "values", "seed"},
    "empty": set(),
    "table_partial": {"entries"},
    "unstable_probe": {"point", "stage", "value"},
    "machine": {"program"},
}


def compile_functional(spec, default_seed: int = 0) -> StagedFunctional:
    """Compile one tagged record into a functional."""
    if not isinstance(spec, dict):
        raise SpecError("functional spec must be an object")
    kind = spec.get("kind")
    if kind not in _FUNCTIONAL_FIELDS:
        raise SpecError(f"unknown kind '{kind}'")
    extra = set(spec) - _FUNCTIONAL_FIELDS[kind] - {"kind"}
    if extra:
        raise SpecError(f"unknown fields {sorted(extra)} for kind '{kind}'")

    if kind == "total_const":
        if not _is_bit(spec.get("value")):
            raise SpecError("total_const needs a bit value")
        return TotalConst(spec["value"])
    if kind == "total_fn":
        table = spec.get("table")
        if not isinstance(table, list) or not all(_is_bit(b) for b in table):
            raise SpecError("total_fn needs a list of bits")
        return TotalFn(tuple(table), spec.get("fill", "cycle"))
    if kind == "undefined_on_class":
        if not _is_nat(spec.get("e")):
            raise SpecError("undefined_on_class needs a natural class index")
        value = spec.get("value", 1)
        if not _is_bit(value):
            raise SpecError("undefined_on_class value must be a bit")
        return UndefinedOnClass(spec["e"], value)
    if kind == "delayed":
        delay = spec.get("delay")
        if (
            not isinstance(delay, dict)
            or set(delay) != {"a", "b"}
            or not _is_nat(delay["a"])
            or not _is_nat(delay["b"])
        ):
            raise SpecError("delayed needs delay coefficients {a, b}")
        return Delayed(compile_functional(spec.get("inner"), default_seed), delay["a"], delay["b"])
    if kind == "random_partial":
        density = spec.get("density")
        if not isinstance(density, (int, float)) or isinstance(density, bool):
            raise SpecError("random_partial needs a numeric density")
        seed = spec.get("seed", default_seed)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SpecError("random_partial seed must be an integer")
        return RandomPartial(float(density), spec.get("values", "one"), seed)
    if kind == "empty":
        return EmptyFunctional()
    if kind == "table_partial":
        entries = spec.get("entries")
        if not isinstance(entries, list):
            raise SpecError("table_partial needs a list of [n, bit, from_stage]")
        table: dict[int, tuple[int, int]] = {}
        for row in entries:
            if (
                not isinstance(row, list)
                or len(row) != 3
                or not _is_nat(row[0])
                or not _is_bit(row[1])
                or not _is_nat(row[2])
            ):
                raise SpecError(f"bad table_partial entry {row}")
            if row[0] in table:
                raise SpecError(f"point {row[0]} listed twice")
            table[row[0]] = (row[1], row[2])
        return TablePartial(table)
    if kind == "unstable_probe":
        if not _is_nat(spec.get("point")) or not _is_nat(spec.get("stage")):
            raise SpecError("unstable_probe needs point and stage")
        value = spec.get("value", 0)
        if not _is_bit(value):
            raise SpecError("unstable_probe value must be a bit")
        return UnstableProbe(spec["point"], spec["stage"], value)
    # machine
    return MachineFunctional(parse_program(spec.get("program")))


def _decode_output(raw) -> int:
    if _is_nat(raw):
        return raw
    if isinstance(raw, list) and len(raw) == 2 and all(_is_nat(v) for v in raw):
        return pair(raw[0], raw[1])
    raise SpecError(f"output must be a natural or a [x, y] pair, got {raw}")


def _decode_premise(raw) -> tuple[int, ...]:
    if not isinstance(raw, list):
        raise SpecError("premise must be a list")
    codes = []
    for item in raw:
        if _is_nat(item):
            codes.append(item)
        elif (
            isinstance(item, list)
            and len(item) == 2
            and _is_nat(item[0])
            and _is_bit(item[1])
        ):
            codes.append(pair(item[0], item[1]))
        else:
            raise SpecError(f"premise entry must be a code or [point, bit], got {item}")
    return tuple(codes)


_OPERATOR_FIELDS = {
    "axioms": {"axioms"},
    "machine": {"program"},
}


def compile_operator(spec, stage_bound: int) -> EnumOperator:
    """Compile one tagged record into an operator.

    Machine operators enumerate axiom codes by dovetailing: code c (coding
    premise bitmask and output) enters at the least stage s with c < s, the
    machine accepting c (halting with output bit 1) within s steps, and the
    premise use within s.  Enumeration is cut off at stage_bound.
    """
    if not isinstance(spec, dict):
        raise SpecError("operator spec must be an object")
    kind = spec.get("kind")
    if kind not in _OPERATOR_FIELDS:
        raise SpecError(f"unknown kind '{kind}'")
    extra = set(spec) - _OPERATOR_FIELDS[kind] - {"kind"}
    if extra:
        raise SpecError(f"unknown fields {sorted(extra)} for kind '{kind}'")

    if kind == "axioms":
        rows = spec.get("axioms")
        if not isinstance(rows, list):
            raise SpecError("axioms must be a list")
        staged = []
        for row in rows:
            if not isinstance(row, dict) or set(row) != {"stage", "premise", "output"}:
                raise SpecError(f"axiom must have stage/premise/output, got {row}")
            if not _is_nat(row["stage"]):
                raise SpecError("axiom stage must be a natural")
            staged.append(
                (
                    row["stage"],
                    Axiom.of(_decode_premise(row["premise"]), _decode_output(row["output"])),
                )
            )
        return EnumOperator.from_staged(staged)

    program = parse_program(spec.get("program"))
    staged = []
    for code in range(stage_bound):
        halted, steps, out = run_machine(program, code, stage_bound)
        if not halted or out != 1:
            continue
        mask, output = unpair(code)
        premise = tuple(i for i in range(mask.bit_length()) if mask >> i & 1)
        use = premise[-1] + 1 if premise else 0
        enters = max(steps, code + 1, use)
        if enters <= stage_bound:
            staged.append((enters, Axiom.of(premise, output)))
    return EnumOperator.from_staged(staged)


# ---------------------------------------------------------------------------
# suites


class FunctionalSuite:
    """Indexed family of staged functionals; absent indices diverge."""

    def __init__(self, entries: dict[int, StagedFunctional]):
        for e in entries:
            if not _is_nat(e):
                raise ValueError(f"functional index must be a natural, got {e}")
        self._entries = dict(entries)

    def query(self, e: int | None, n: int, s: int) -> int | None:
        if e is None:
            return None
        fn = self._entries.get(e)
        return None if fn is None else fn.query(n, s)

    def domain(self, e: int, s: int) -> list[int]:
        """All n < s on which entry e has converged by stage s."""
        return [n for n in range(s) if self.query(e, n, s) is not None]

    def indices(self) -> list[int]:
        return sorted(self._entries)


class OperatorSuite:
    """Indexed family of operators; absent indices are axiomless."""

    def __init__(self, entries: dict[int, EnumOperator]):
        for e in entries:
            if not _is_nat(e):
                raise ValueError(f"operator index must be a natural, got {e}")
        self._entries = dict(entries)

    def get(self, e: int) -> EnumOperator:
        return self._entries.get(e, EMPTY_OPERATOR)

    def indices(self) -> list[int]:
        return sorted(self._entries)


@dataclass(frozen=True)
class ProbeGrid:
    """Validation grid: entry indices are taken from the suite itself."""

    points: int
    stages: int


def default_probe(horizon: int) -> ProbeGrid:
    return ProbeGrid(points=32, stages=max(4, min(horizon, 64)))


def validate_functionals(suite: FunctionalSuite, probe: ProbeGrid) -> None:
    """Sweep the probe grid asserting stage-bound and monotone stability."""
    for e in suite.indices():
        for n in range(probe.points):
            settled: int | None = None
            settled_at = 0
            for s in range(probe.stages + 1):
                got = suite.query(e, n, s)
                if got is not None and n >= s:
                    raise SuiteValidationError(
                        f"stage bound violated: entry {e} converged on {n} at stage {s}"
                    )
                if settled is None:
                    if got is not None:
                        settled, settled_at = got, s
                elif got != settled:
                    raise SuiteValidationError(
                        "monotone-stability violated: entry "
                        f"{e} point {n} was {settled} at stage {settled_at} "
                        f"but {got} at stage {s}"
                    )


def build_suite(
    functional_specs: list,
    operator_specs: list,
    horizon: int,
    probe: ProbeGrid | None = None,
    default_seed: int = 0,
) -> tuple[FunctionalSuite, OperatorSuite]:
    """Compile and validate a whole family from tagged records."""
    probe = probe or default_probe(horizon)
    functionals: dict[int, StagedFunctional] = {}
    for e, spec in enumerate(functional_specs):
        try:
            functionals[e] = compile_functional(spec, default_seed)
        except SpecError as err:
            raise SpecError(f"functionals[{e}]: {err}") from None
    stage_bound = max(horizon, probe.stages)
    ops: dict[int, EnumOperator] = {}
    for e, spec in enumerate(operator_specs):
        try:
            op = compile_operator(spec, stage_bound)
        except SpecError as err:
            raise SpecError(f"operators[{e}]: {err}") from None
        try:
            validate_use_bound(op)
        except OperatorValidationError as err:
            raise SuiteValidationError(f"operators[{e}]: {err}") from None
        ops[e] = op
    fsuite = FunctionalSuite(functionals)
    validate_functionals(fsuite, probe)
    return fsuite, OperatorSuite(ops)

"""Run one input against the program and a mutant sample; judge each mutant."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .ir import ExecutionResult, Program, Type, Value, execute, execute_probed, same_bytes
from .ir.values import CrashKind
from .mutation import Mutant, MutantPool


class VerdictStatus(enum.Enum):
    KILLED = "KILLED"
    SURVIVED = "SURVIVED"


class Reason(enum.Enum):
    CRASHED = "CRASHED"
    OUTPUT_DIFF = "OUTPUT_DIFF"
    TIMEOUT = "TIMEOUT"
    CONSISTENT = "CONSISTENT"


@dataclass(frozen=True)
class MutantVerdict:
    mutant_id: int
    status: VerdictStatus
    reason: Reason

    @property
    def killed(self) -> bool:
        return self.status is VerdictStatus.KILLED


@dataclass(frozen=True)
class MutationStats:
    selected: tuple = ()
    verdicts: tuple = ()
    capable: bool = False
    new_kills: frozenset = frozenset()
    analyzed: bool = True

    @property
    def killed_ids(self) -> frozenset:
        return frozenset(v.mutant_id for v in self.verdicts if v.killed)

    @classmethod
    def unanalyzed(cls, selected=()) -> "MutationStats":
        return cls(selected=tuple(selected), analyzed=False)


@dataclass(frozen=True)
class Feedback:
    cov: frozenset
    res: ExecutionResult
    stat: MutationStats = field(default_factory=MutationStats)


class Criterion:
    """Output consistency contract: decides whether two outputs agree."""

    name = "bytes"

    def consistent(self, a: Value, b: Value) -> bool:
        return same_bytes(a, b)

    def __repr__(self) -> str:
        return self.name


class FloatEpsCriterion(Criterion):
    """Floats within an absolute epsilon agree; everything else by bytes.

    NaN agrees only with NaN.
    """

    def __init__(self, eps: float):
        if not eps >= 0:
            raise ValueError("eps must be >= 0")
        self.eps = eps
        self.name = f"float-eps:{eps!r}"

    def _close(self, x: float, y: float) -> bool:
        if x != x or y != y:
            return x != x and y != y
        return x == y or abs(x - y) <= self.eps

    def consistent(self, a: Value, b: Value) -> bool:
        if a.ty is not b.ty:
            return False
        if a.ty is Type.FLOAT:
            return self._close(a.data, b.data)
        if a.ty is Type.FLOAT_ARR:
            return len(a.data) == len(b.data) and all(
                self._close(x, y) for x, y in zip(a.data, b.data)
            )
        return same_bytes(a, b)


BYTES = Criterion()


def parse_criterion(text: str) -> Criterion:
    if text == "bytes":
        return BYTES
    if text.startswith("float-eps:"):
        try:
            return FloatEpsCriterion(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise ValueError(f"bad criterion {text!r}: {exc}") from None
    raise ValueError(f"unknown criterion {text!r}; use bytes or float-eps:<eps>")


def _budget_factor(ratio: float) -> Fraction:
    if not 0 <= ratio <= 1:
        raise ValueError("ratio must be in [0, 1]")
    # Fraction(str(0.1)) is exactly 1/10; 100 * 1.1 in floats is 110.00000000000001
    return 1 + Fraction(str(ratio))


def mutant_budget(put_fuel_used: int, ratio: float) -> int:
    """ceil(t * (1 + r)), computed exactly on the decimal value of r."""
    if put_fuel_used < 0:
        raise ValueError("fuel used must be >= 0")
    return math.ceil(put_fuel_used * _budget_factor(ratio))


def check_mutant(
    put: ExecutionResult,
    mut: ExecutionResult,
    criterion: Criterion = BYTES,
    mutant_id: int = -1,
) -> MutantVerdict:
    if not put.ok:
        raise ValueError("mutants are only judged against a successful run")
    if not mut.ok:
        if mut.crash is CrashKind.FUEL_EXHAUSTED:
            return MutantVerdict(mutant_id, VerdictStatus.KILLED, Reason.TIMEOUT)
        return MutantVerdict(mutant_id, VerdictStatus.KILLED, Reason.CRASHED)
    if len(put.outputs) != len(mut.outputs) or not all(
        criterion.consistent(a, b) for a, b in zip(put.outputs, mut.outputs)
    ):
        return MutantVerdict(mutant_id, VerdictStatus.KILLED, Reason.OUTPUT_DIFF)
    return MutantVerdict(mutant_id, VerdictStatus.SURVIVED, Reason.CONSISTENT)


class TestEngine:
    """Holds the per-campaign pieces of run_all: program, pool, budget knobs.

    ``guards`` (from ``site_guards``) turns on pruning: a mutant is not run
    when its mutated site provably did not execute on this input, or when
    it is a boundary mutant whose comparison never saw equal operands.
    Either way it computes exactly what the program computed, so it is
    reported SURVIVED/CONSISTENT. ``workers`` > 1 runs mutants on a thread
    pool; results are identical to the sequential order either way.
    """

    __test__ = False  # not a pytest class

    def __init__(
        self,
        program: Program,
        pool: Optional[MutantPool],
        ratio: float = 0.1,
        fuel_cap: int = 1_000_000,
        criterion: Criterion = BYTES,
        workers: int = 1,
        guards: Optional[dict] = None,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.program = program
        self.pool = pool
        self.ratio = ratio
        factor = _budget_factor(ratio)
        self._num, self._den = factor.numerator, factor.denominator
        self.fuel_cap = fuel_cap
        self.criterion = criterion
        self.workers = workers
        self.guards = guards
        self._executor = ThreadPoolExecutor(workers) if workers > 1 else None
        self.mutant_runs = 0
        self.skipped_runs = 0
        self.mutant_fuel = 0

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def run_put(self, invocations) -> tuple:
        """(result, coverage, equal-operand sites or None)."""
        if self.guards is None:
            res, cov = execute(self.program, invocations, self.fuel_cap)
            return res, cov, None
        return execute_probed(self.program, invocations, self.fuel_cap)

    def reached(self, mutant: Mutant, cov: frozenset, eq=None) -> bool:
        """False only if the mutant provably behaves like the program."""
        if self.guards is None:
            return True
        site = mutant.site.site_id
        if eq is not None and mutant.mutator == "CONDITIONAL_BOUNDARY" and site not in eq:
            return False
        guard = self.guards.get(site)
        return guard is None or not guard.isdisjoint(cov)

    def judge(self, mutant: Mutant, invocations, put: ExecutionResult, budget: int):
        res, _ = execute(mutant.program, invocations, budget, coverage=False)
        return check_mutant(put, res, self.criterion, mutant.id), res.fuel_used

    def run_mutants(
        self, mutants: Sequence[Mutant], invocations, put: ExecutionResult, cov: frozenset, eq=None
    ) -> list:
        budget = max(1, -(-put.fuel_used * self._num // self._den))
        ordered = sorted(mutants, key=lambda m: m.id)
        verdicts: list = [None] * len(ordered)
        todo = []
        for i, m in enumerate(ordered):
            if self.reached(m, cov, eq):
                todo.append(i)
            else:
                verdicts[i] = MutantVerdict(m.id, VerdictStatus.SURVIVED, Reason.CONSISTENT)
        self.mutant_runs += len(todo)
        self.skipped_runs += len(ordered) - len(todo)
        if self._executor is not None and len(todo) > 1:
            futures = [
                (i, self._executor.submit(self.judge, ordered[i], invocations, put, budget))
                for i in todo
            ]
            results = [(i, fut.result()) for i, fut in futures]
        else:
            results = [(i, self.judge(ordered[i], invocations, put, budget)) for i in todo]
        for i, (verdict, fuel) in results:
            verdicts[i] = verdict
            self.mutant_fuel += fuel
        return verdicts

    def run(self, mutants: Sequence[Mutant], invocations, put=None) -> Feedback:
        """Execute the program, then (if it succeeded) every selected mutant.

        ``put`` may carry an already computed ``run_put`` triple.
        """
        res, cov, eq = put if put is not None else self.run_put(invocations)
        selected = tuple(sorted(m.id for m in mutants))
        if not res.ok:
            return Feedback(cov, res, MutationStats.unanalyzed(selected))
        if not mutants:
            return Feedback(cov, res, MutationStats(selected=()))
        verdicts = tuple(self.run_mutants(mutants, invocations, res, cov, eq))
        killed = frozenset(v.mutant_id for v in verdicts if v.killed)
        previously = self.pool.killed if self.pool is not None else set()
        stat = MutationStats(
            selected=selected,
            verdicts=verdicts,
            capable=bool(killed),
            new_kills=frozenset(killed - previously),
            analyzed=True,
        )
        return Feedback(cov, res, stat)


def run_all(
    program: Program,
    mutants: Sequence[Mutant],
    invocations,
    ratio: float = 0.1,
    fuel_cap: int = 1_000_000,
    pool: Optional[MutantPool] = None,
    criterion: Criterion = BYTES,
    workers: int = 1,
    guards: Optional[dict] = None,
) -> Feedback:
    with TestEngine(program, pool, ratio, fuel_cap, criterion, workers, guards) as engine:
        return engine.run(mutants, invocations)

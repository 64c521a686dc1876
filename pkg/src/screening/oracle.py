"""Exhaustive search over screening sets on small populations.

Solves the expectation-form problem exactly: screening set S of size k
contributes sum(mu_S) and consumes that much budget; the rest of the budget
B is filled greedily over unscreened units by descending mu, the last unit
taken fractionally.  This is the only place fractional allocation exists.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DomainError

ENUMERATION_CAP = 2_000_000
TIE_TOL = 1e-12


@dataclass(frozen=True)
class OracleInstance:
    scores: tuple
    screen_capacity: int
    alloc_budget: float

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        n = len(scores)
        if n == 0 or any(not 0.0 <= s <= 1.0 for s in scores):
            raise DomainError("oracle scores must be a nonempty list in [0, 1]")
        if not 0 <= self.screen_capacity <= n:
            raise DomainError(f"screen capacity {self.screen_capacity} not in [0, {n}]")
        if not 0.0 < self.alloc_budget < n:
            raise DomainError(f"allocation budget {self.alloc_budget} not in (0, {n})")

    @property
    def n(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class OracleResult:
    best_value: float
    best_screen_sets: tuple  # tuples of original indices, each sorted
    evaluated: int


def greedy_fill(scores, candidates, budget: float) -> tuple[float, list]:
    """Fill ``budget`` over ``candidates`` by descending score.

    Returns the value and the per-unit allocated fractions, in fill order,
    as (index, fraction) pairs.
    """
    value, taken = 0.0, []
    if budget <= 0:
        return value, taken
    for i in sorted(candidates, key=lambda j: (-scores[j], j)):
        share = min(1.0, budget)
        value += share * scores[i]
        taken.append((i, share))
        budget -= share
        if budget <= 0:
            break
    return value, taken


def screening_value(inst: OracleInstance, screen) -> float | None:
    """Objective for one screening set; None when it overspends the budget."""
    scores = inst.scores
    used = sum(scores[i] for i in screen)
    if used > inst.alloc_budget + TIE_TOL:
        return None
    chosen = set(screen)
    rest = [i for i in range(inst.n) if i not in chosen]
    fill, _ = greedy_fill(scores, rest, inst.alloc_budget - used)
    return used + fill


def oracle_solve(inst: OracleInstance, cap: int = ENUMERATION_CAP) -> OracleResult:
    """Enumerate every k-subset and report the maximum and all its argmaxes."""
    total = math.comb(inst.n, inst.screen_capacity)
    if total > cap:
        raise CapacityError(f"C({inst.n},{inst.screen_capacity}) = {total} exceeds cap {cap}")
    best, argmax = -math.inf, []
    for s in itertools.combinations(range(inst.n), inst.screen_capacity):
        v = screening_value(inst, s)
        if v is None:
            continue
        if v > best + TIE_TOL:
            best, argmax = v, [s]
        elif v >= best - TIE_TOL:
            argmax.append(s)
    if not argmax:
        raise DomainError("no screening set satisfies the allocation budget")
    return OracleResult(best, tuple(argmax), total)


@dataclass(frozen=True)
class StructureReport:
    passed: bool
    contiguous_sets: tuple
    ordering_ok_sets: tuple
    witnesses: tuple = field(default_factory=tuple)

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        lines = [
            f"structure: {state}",
            f"  contiguous argmax sets: {len(self.contiguous_sets)}",
            f"  argmax sets with no allocated unit below a screened one: {len(self.ordering_ok_sets)}",
        ]
        lines += [f"  witness: {w}" for w in self.witnesses]
        return "\n".join(lines)


def is_contiguous(scores, screen) -> bool:
    """No unscreened unit has a score strictly inside the screened score range.

    Ties at the range ends are allowed, which makes any tie ordering count.
    """
    if len(screen) <= 1:
        return True
    chosen = set(screen)
    lo = min(scores[i] for i in screen)
    hi = max(scores[i] for i in screen)
    return not any(lo < scores[j] < hi for j in range(len(scores)) if j not in chosen)


def fully_allocated_below_screened(inst: OracleInstance, screen) -> list:
    """Unscreened units allocated in full whose score is below some screened unit."""
    scores = inst.scores
    used = sum(scores[i] for i in screen)
    chosen = set(screen)
    rest = [i for i in range(inst.n) if i not in chosen]
    _, taken = greedy_fill(scores, rest, inst.alloc_budget - used)
    top_screened = max((scores[i] for i in screen), default=-math.inf)
    return [i for i, share in taken if share >= 1.0 and scores[i] < top_screened]


def verify_structure(inst: OracleInstance, result: OracleResult | None = None) -> StructureReport:
    """Check interval structure and direct-above-screened ordering of the optimum.

    Passes when at least one argmax set is contiguous and puts no fully
    allocated unscreened unit below a screened one.
    """
    if result is None:
        result = oracle_solve(inst)
    contiguous, ordering_ok, witnesses = [], [], []
    for s in result.best_screen_sets:
        c = is_contiguous(inst.scores, s)
        bad = fully_allocated_below_screened(inst, s)
        if c:
            contiguous.append(s)
        if not bad:
            ordering_ok.append(s)
        if not c:
            witnesses.append(f"set {s} is not contiguous in score order")
        if bad:
            witnesses.append(f"set {s}: units {bad} fully allocated below a screened unit")
    passed = any(is_contiguous(inst.scores, s) and not fully_allocated_below_screened(inst, s)
                 for s in result.best_screen_sets)
    return StructureReport(passed, tuple(contiguous), tuple(ordering_ok),
                           tuple(witnesses) if not passed else ())


def band_policy_value(inst: OracleInstance) -> float:
    """Oracle objective of the fixed-point band computed on the instance's scores."""
    from .dist import Empirical
    from .policy import Budgets, band_ranks
    from .solver import fixed_point_solve

    n = inst.n
    k = inst.screen_capacity
    if k == 0:
        return screening_value(inst, ())
    d = Empirical(inst.scores)
    alpha, beta = k / n, inst.alloc_budget / n
    policy, _ = fixed_point_solve(d, Budgets(alpha, beta))
    start, stop = band_ranks(policy, n)
    screen = tuple(sorted(int(i) for i in d.order[start:stop]))
    v = screening_value(inst, screen)
    return -math.inf if v is None else v


def random_instance(rng: np.random.Generator, n: int, k: int, budget: float) -> OracleInstance:
    return OracleInstance(tuple(rng.uniform(0.0, 1.0, size=n)), k, budget)

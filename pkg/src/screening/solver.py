"""Solvers for the optimal screening band on an arbitrary risk distribution.

Two independent routes:

* ``fixed_point_solve`` iterates the band-average map rho -> g(rho), where the
  screening band of mass alpha sits directly below the unscreened
  allocation mass beta - alpha * rho.
* ``root_find_solve`` bisects on the budget residual
  G(u) = int_{u-alpha}^{u} Q + (1 - u) - beta over the probability level
  u = F(q_beta); G is decreasing, so the bracket [max(1 - beta, alpha), 1]
  works whenever the budget is not saturated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dist import Empirical, RiskDistribution, Uniform, floor_rank
from .errors import (
    BracketError,
    ConvergenceError,
    DegenerateBandError,
    DomainError,
    RegimeError,
    UnsupportedDistributionError,
)
from .policy import (
    Budgets,
    ScreeningPolicy,
    SolverKind,
    no_screening_policy,
    policy_from_rho,
    uniform_closed_form,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class FixedPointTrace:
    rho_sequence: tuple
    c_F: float
    tolerance: float
    max_iterations: int
    iteration_bound: int | None = None
    gaps: tuple = field(init=False)

    def __post_init__(self):
        seq = self.rho_sequence
        object.__setattr__(self, "gaps", tuple(abs(b - a) for a, b in zip(seq, seq[1:])))

    @property
    def iterations(self) -> int:
        return max(len(self.rho_sequence) - 1, 0)

    def rows(self):
        """(iter, rho, gap) triples; the starting point has no gap."""
        for k, rho in enumerate(self.rho_sequence):
            yield k, rho, (self.gaps[k - 1] if k else None)


def _level(x):
    return min(max(x, 0.0), 1.0)


def _raw_contraction(d: RiskDistribution, b: Budgets) -> float:
    return d.quantile(_level(1 - b.beta + b.alpha)) - d.quantile(_level(1 - b.beta - b.alpha))


def contraction_constant(d: RiskDistribution, b: Budgets) -> float:
    """Lipschitz bound of the band-average map, Q(1-beta+alpha) - Q(1-beta-alpha)."""
    value = _raw_contraction(d, b)
    if not (b.alpha < b.beta and b.alpha + b.beta < 1):
        raise RegimeError(
            f"contraction guarantee needs alpha < beta and alpha + beta < 1 "
            f"(alpha={b.alpha}, beta={b.beta}); raw constant {value}",
            value=value,
        )
    return value


def iteration_bound(c_F: float, tol: float) -> int | None:
    """Iterations after which c_F**k drops below ``tol``; None if c_F not in (0, 1)."""
    if not 0.0 < c_F < 1.0:
        return None
    return math.ceil(math.log(tol) / math.log(c_F))


def band_average(d: RiskDistribution, b: Budgets, rho: float) -> float:
    """One application of the update map g(rho)."""
    a, be = b.alpha, b.beta
    if isinstance(d, Empirical):
        # whole units: floor of the cumulative mass from the top
        n = d.n
        k = floor_rank(a * n)
        upper = floor_rank((be - a * rho) * n)
        stop = n - upper
        start = max(stop - k, 0)
        if start >= stop:
            raise DegenerateBandError(
                f"screening band holds no whole unit (alpha*n={a * n:g})"
            )
        return d.slice_mean(start, stop)
    hi = _level(1 - be + a * rho)
    lo = _level(1 - be - a + a * rho)
    if hi <= lo:
        raise DegenerateBandError(f"screening band at levels [{lo}, {hi}] is empty")
    return d.quantile_integral(lo, hi) / (hi - lo)


def check_not_saturated(d: RiskDistribution, b: Budgets) -> None:
    """Raise if screening the lowest alpha mass still leaves allocation budget unspent.

    Then no band spends the budget exactly and the thresholds are undefined;
    this can only happen when alpha + beta > 1.
    """
    if b.alpha > 0 and b.alpha + b.beta > 1:
        if d.quantile_integral(0.0, b.alpha) + (1.0 - b.alpha) < b.beta:
            raise DomainError(
                f"allocation budget beta={b.beta} is saturated: screening the lowest "
                f"alpha={b.alpha} still leaves budget unspent"
            )


def fixed_point_solve(d: RiskDistribution, b: Budgets, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER):
    """Iterate g from rho = 0 until successive values differ by less than ``tol``.

    Returns ``(policy, trace)``.  Raises :class:`ConvergenceError` carrying
    the trace if ``max_iter`` updates do not meet the tolerance.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    c_F = _raw_contraction(d, b)
    if b.alpha == 0.0:
        trace = FixedPointTrace((0.0,), c_F, tol, max_iter, 0)
        return no_screening_policy(d, b), trace

    check_not_saturated(d, b)
    seq = [0.0]
    rho = 0.0
    converged = False
    for _ in range(max_iter):
        nxt = band_average(d, b, rho)
        seq.append(nxt)
        if abs(nxt - rho) < tol:
            rho = nxt
            converged = True
            break
        rho = nxt
    trace = FixedPointTrace(tuple(seq), c_F, tol, max_iter, iteration_bound(c_F, tol))
    if not converged:
        raise ConvergenceError(
            f"fixed point not reached within {max_iter} iterations "
            f"(last gap {trace.gaps[-1]:.3g})",
            trace=trace,
        )
    policy = policy_from_rho(d, b, rho, SolverKind.FIXED_POINT, trace.iterations, True)
    return policy, trace


def budget_gap(d: RiskDistribution, b: Budgets, level: float) -> float:
    """Allocation-budget residual with the screening band topped at ``level``."""
    return d.quantile_integral(level - b.alpha, level) + (1.0 - level) - b.beta


def root_find_solve(d: RiskDistribution, b: Budgets, tol: float = DEFAULT_TOL) -> ScreeningPolicy:
    """Bisect the allocation-budget residual; needs a continuous distribution."""
    if not d.is_continuous:
        raise UnsupportedDistributionError(f"root finding needs a continuous CDF, got {d.spec}")
    if b.alpha == 0.0:
        return no_screening_policy(d, b)
    check_not_saturated(d, b)
    lo, hi = max(1.0 - b.beta, b.alpha), 1.0
    g_lo, g_hi = budget_gap(d, b, lo), budget_gap(d, b, hi)
    if g_lo < 0 or g_hi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: G = {g_lo:.3g}, {g_hi:.3g}")
    iterations = 0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        iterations += 1
        if budget_gap(d, b, mid) > 0:
            lo = mid
        else:
            hi = mid
    level = lo if abs(budget_gap(d, b, lo)) <= abs(budget_gap(d, b, hi)) else hi
    residual = budget_gap(d, b, level)
    if abs(residual) > tol:
        raise ConvergenceError(f"bisection stalled with budget residual {residual:.3g}")
    rho = (level - 1.0 + b.beta) / b.alpha
    return policy_from_rho(d, b, rho, SolverKind.ROOT_FIND, iterations, True)


def budget_residuals(d: RiskDistribution, p: ScreeningPolicy) -> tuple[float, float]:
    """(screening, allocation) constraint residuals evaluated in score space."""
    screen = d.cdf(p.q_beta) - d.cdf(p.q_alpha) - p.alpha
    alloc = d.partial_expectation(p.q_alpha, p.q_beta) + 1.0 - d.cdf(p.q_beta) - p.beta
    return screen, alloc


def solve(d: RiskDistribution, b: Budgets, method: str = "fixed-point",
          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ScreeningPolicy:
    """Dispatch on ``method`` in {fixed-point, root-find, closed-form}."""
    if method == "fixed-point":
        return fixed_point_solve(d, b, tol, max_iter)[0]
    if method == "root-find":
        return root_find_solve(d, b, tol)
    if method == "closed-form":
        if not isinstance(d, Uniform):
            raise UnsupportedDistributionError("closed form exists only for uniform risk")
        check_not_saturated(d, b)
        return uniform_closed_form(b)
    raise ValueError(f"unknown solver {method!r}")

"""Value of screening: V*(alpha), its derivatives, and alpha-sweep curves."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dist import Empirical, RiskDistribution
from .errors import DomainError, ScreeningError, UnsupportedDistributionError
from .policy import Budgets, ScreeningPolicy
from .solver import DEFAULT_TOL, solve

CURVE_COLUMNS = ("alpha", "q_alpha", "q_beta", "value", "precision", "marginal", "utility_gap")


def allocation_value(d: RiskDistribution, p: ScreeningPolicy) -> float:
    """Expected mass of correctly allocated units under ``p``.

    Integrates the quantile function over every level at or above the
    bottom of the screening band, so atoms are split by mass.
    """
    return d.quantile_integral(min(max(p.level_alpha, 0.0), 1.0), 1.0)


def optimal_value(d: RiskDistribution, b: Budgets, method: str = "fixed-point",
                  tol: float = DEFAULT_TOL) -> float:
    return allocation_value(d, solve(d, b, method, tol))


def marginal_from_thresholds(q_alpha: float, q_beta: float) -> float:
    denom = 1.0 - q_beta + q_alpha
    if denom <= 0.0:
        return 0.0
    return q_alpha * (1.0 - q_beta) / denom


def marginal_value(d: RiskDistribution, b: Budgets, method: str = "fixed-point",
                   tol: float = DEFAULT_TOL) -> float:
    """dV*/dalpha at the optimal thresholds."""
    p = solve(d, b, method, tol)
    return marginal_from_thresholds(p.q_alpha, p.q_beta)


def second_derivative(d: RiskDistribution, b: Budgets, method: str = "fixed-point",
                      tol: float = DEFAULT_TOL) -> float:
    """d2V*/dalpha2; needs a density at both thresholds."""
    if not d.is_continuous:
        raise UnsupportedDistributionError(f"second derivative needs a density, {d.spec} has none")
    p = solve(d, b, method, tol)
    qa, qb = p.q_alpha, p.q_beta
    fa, fb = d.pdf(qa), d.pdf(qb)
    num = (1.0 - qb) ** 3 * fb + qa ** 3 * fa
    return -num / (fa * fb * (1.0 - qb + qa) ** 3)


@dataclass(frozen=True)
class CurveRow:
    alpha: float
    q_alpha: float
    q_beta: float
    value: float
    precision: float
    marginal: float
    utility_gap: float
    method: str = "closed-form"
    status: str = "ok"

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CURVE_COLUMNS)


@dataclass(frozen=True)
class ValueCurve:
    beta: float
    rows: tuple

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def ok_rows(self):
        return tuple(r for r in self.rows if r.status != "failed")


def _failed_row(alpha):
    nan = float("nan")
    return CurveRow(alpha, nan, nan, nan, nan, nan, nan, method="none", status="failed")


def value_curve(d: RiskDistribution, beta: float, alpha_grid, method: str = "fixed-point",
                tol: float = DEFAULT_TOL, workers: int = 1) -> ValueCurve:
    """One row per grid point, in grid order.

    Rows whose solve fails are kept and marked ``failed``.  ``alpha == beta``
    rows are computed as the limit and marked ``boundary``.  For empirical
    distributions the marginal column is a finite difference along the grid.
    """
    grid = [float(a) for a in alpha_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DomainError("alpha grid must be sorted ascending")
    if any(a > beta or a < 0 for a in grid):
        raise DomainError(f"alpha grid must lie in [0, beta={beta}]")
    base = optimal_value(d, Budgets(0.0, beta), method, tol)
    empirical = isinstance(d, Empirical)

    def one(alpha):
        try:
            p = solve(d, Budgets(alpha, beta), method, tol)
        except ScreeningError:
            return _failed_row(alpha)
        v = allocation_value(d, p)
        return CurveRow(
            alpha=alpha,
            q_alpha=p.q_alpha,
            q_beta=p.q_beta,
            value=v,
            precision=v / beta,
            marginal=float("nan") if empirical else marginal_from_thresholds(p.q_alpha, p.q_beta),
            utility_gap=v - base,
            method="finite-difference" if empirical else "closed-form",
            status="boundary" if alpha == beta else "ok",
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, grid))
    else:
        rows = [one(a) for a in grid]

    if empirical:
        rows = _finite_difference_marginals(rows)
    return ValueCurve(beta, tuple(rows))


def _finite_difference_marginals(rows):
    good = [i for i, r in enumerate(rows) if r.status != "failed"]
    if len(good) < 2:
        return rows
    a = np.array([rows[i].alpha for i in good])
    v = np.array([rows[i].value for i in good])
    if np.any(np.diff(a) <= 0):
        return rows
    slopes = np.gradient(v, a)
    out = list(rows)
    for i, s in zip(good, slopes):
        r = out[i]
        out[i] = CurveRow(r.alpha, r.q_alpha, r.q_beta, r.value, r.precision, float(s),
                          r.utility_gap, r.method, r.status)
    return out

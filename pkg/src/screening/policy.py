"""Budgets, the screening-policy record, and realized two-stage allocation."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dist import RiskDistribution, floor_rank
from .errors import DomainError


@dataclass(frozen=True)
class Budgets:
    """Screening budget ``alpha`` and allocation budget ``beta``.

    ``alpha == beta`` is accepted as the limit of an empty direct band.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        a, b = self.alpha, self.beta
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DomainError(f"budgets must be finite, got alpha={a}, beta={b}")
        if not 0.0 < b < 1.0:
            raise DomainError(f"beta={b} must lie in (0, 1)")
        if not 0.0 <= a <= b:
            raise DomainError(f"alpha={a} must lie in [0, beta={b}]")

    @property
    def in_guaranteed_regime(self) -> bool:
        return self.alpha + self.beta < 1.0


class SolverKind(str, enum.Enum):
    CLOSED_FORM_UNIFORM = "closed-form"
    ROOT_FIND = "root-find"
    FIXED_POINT = "fixed-point"
    NO_SCREENING = "no-screening"


@dataclass(frozen=True)
class ScreeningPolicy:
    q_alpha: float
    q_beta: float
    q_tilde_beta: float
    rho_star: float
    mass_direct: float
    mass_residual: float
    mass_screen: float
    solver: SolverKind
    iterations: int
    converged: bool
    in_guaranteed_regime: bool

    @property
    def alpha(self) -> float:
        return self.mass_screen

    @property
    def beta(self) -> float:
        return self.mass_direct + self.mass_screen

    @property
    def level_beta(self) -> float:
        """Probability level F(q_beta): everything above it is allocated unscreened."""
        return 1.0 - self.mass_direct - self.mass_residual

    @property
    def level_alpha(self) -> float:
        return self.level_beta - self.mass_screen

    def to_dict(self) -> dict:
        out = asdict(self)
        out["solver"] = self.solver.value
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ScreeningPolicy":
        kwargs = {k: doc[k] for k in cls.__dataclass_fields__}
        kwargs["solver"] = SolverKind(kwargs["solver"])
        return cls(**kwargs)


def _clip01(x):
    return min(max(x, 0.0), 1.0)


def policy_from_rho(d: RiskDistribution, b: Budgets, rho: float, solver: SolverKind,
                    iterations: int = 0, converged: bool = True) -> ScreeningPolicy:
    """Build the policy implied by a screening-band average risk ``rho``."""
    a, be = b.alpha, b.beta
    return ScreeningPolicy(
        q_alpha=d.quantile(_clip01(1.0 - be - a + a * rho)),
        q_beta=d.quantile(_clip01(1.0 - be + a * rho)),
        q_tilde_beta=d.quantile(1.0 - be),
        rho_star=float(rho),
        mass_direct=be - a,
        mass_residual=a * (1.0 - rho),
        mass_screen=a,
        solver=solver,
        iterations=iterations,
        converged=converged,
        in_guaranteed_regime=b.in_guaranteed_regime,
    )


def no_screening_threshold(d: RiskDistribution, b: Budgets) -> float:
    """The (1 - beta)-quantile: allocate iff mu exceeds it."""
    return d.quantile(1.0 - b.beta)


def no_screening_policy(d: RiskDistribution, b: Budgets) -> ScreeningPolicy:
    if b.alpha != 0.0:
        raise DomainError("no-screening policy needs alpha == 0")
    q = no_screening_threshold(d, b)
    return ScreeningPolicy(q, q, q, 0.0, b.beta, 0.0, 0.0, SolverKind.NO_SCREENING,
                           0, True, b.in_guaranteed_regime)


def uniform_closed_form(b: Budgets) -> ScreeningPolicy:
    """Thresholds for Uniform(0, 1) risk, no iteration needed."""
    a, be = b.alpha, b.beta
    if 1.0 - be - a + 0.5 * a * a < 0.0:
        raise DomainError(f"allocation budget beta={be} is saturated at alpha={a}")
    q_beta = (1.0 - be - 0.5 * a * a) / (1.0 - a)
    q_alpha = q_beta - a
    # band mean of a uniform band is its midpoint
    rho = 0.5 * (q_alpha + q_beta) if a > 0 else 0.0
    return ScreeningPolicy(
        q_alpha=q_alpha,
        q_beta=q_beta,
        q_tilde_beta=1.0 - be,
        rho_star=rho,
        mass_direct=be - a,
        mass_residual=a * (1.0 - rho),
        mass_screen=a,
        solver=SolverKind.CLOSED_FORM_UNIFORM,
        iterations=0,
        converged=True,
        in_guaranteed_regime=b.in_guaranteed_regime,
    )


# ---------------------------------------------------------------------------
# realized allocation on a finite population


@dataclass(frozen=True, eq=False)
class AllocationResult:
    allocated: int
    true_positives: int
    screened: int
    budget: int
    precision: float
    allocated_idx: np.ndarray = field(repr=False)
    screened_idx: np.ndarray = field(repr=False)


def _ascending_order(pop):
    order = getattr(pop, "order", None)
    if order is None:
        order = np.argsort(np.asarray(pop.mu), kind="stable")
    return order


def budget_units(beta: float, n: int) -> int:
    units = floor_rank(beta * n)
    if units < 1:
        raise DomainError(f"beta={beta} allocates no whole unit in a population of {n}")
    return units


def allocate_two_stage(y, desc, screened_mask, budget) -> AllocationResult:
    """Screened positives first (descending score), then unscreened units by score.

    The second step is where saved budget spills below the screening band.
    """
    y = np.asarray(y)
    pos = screened_mask & (y == 1)
    take_pos = desc[pos[desc]][:budget]
    rest = desc[~screened_mask[desc]][: budget - take_pos.size]
    allocated = np.concatenate((take_pos, rest))
    return _result(y, allocated, screened_mask, budget)


def allocate_greedy_veto(y, desc, screened_mask, budget) -> AllocationResult:
    """Walk down the score ranking, skipping screened units observed as Y=0."""
    y = np.asarray(y)
    eligible = ~(screened_mask & (y == 0))
    allocated = desc[eligible[desc]][:budget]
    return _result(y, allocated, screened_mask, budget)


def _result(y, allocated, screened_mask, budget):
    tp = int(y[allocated].sum())
    screened_idx = np.flatnonzero(screened_mask)
    return AllocationResult(
        allocated=int(allocated.size),
        true_positives=tp,
        screened=int(screened_idx.size),
        budget=budget,
        precision=tp / budget,
        allocated_idx=allocated,
        screened_idx=screened_idx,
    )


def band_ranks(p: ScreeningPolicy, n: int) -> tuple[int, int]:
    """Ascending-rank slice ``[start, stop)`` of the screening band.

    Units above ``stop`` are allocated without screening.  Sizes are whole
    units: floor of the upper mass times n, and floor(alpha * n) screened.
    """
    upper = floor_rank((p.mass_direct + p.mass_residual) * n)
    k = floor_rank(p.mass_screen * n)
    if upper + k > n:
        raise DomainError(f"policy bands need {upper + k} units but population has {n}")
    return n - upper - k, n - upper


def evaluate_two_stage(p: ScreeningPolicy, pop) -> AllocationResult:
    """Apply ``p`` to a population with realized outcomes.

    ``pop`` needs ``mu`` and ``y`` arrays; an ``order`` attribute (stable
    ascending argsort of ``mu``) is used when present.  Band membership is by
    rank so atoms and ties split deterministically.
    """
    mu = np.asarray(pop.mu)
    n = mu.size
    budget = budget_units(p.beta, n)
    asc = _ascending_order(pop)
    start, stop = band_ranks(p, n)
    screened = np.zeros(n, dtype=bool)
    screened[asc[start:stop]] = True
    return allocate_two_stage(pop.y, asc[::-1], screened, budget)

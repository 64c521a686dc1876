"""Synthetic populations and seeded Monte-Carlo policy comparisons.

Randomness is counter-based: unit i of a population drawn with ``seed``
gets its risk and outcome from a hash of (seed, i, stream), so a population
is the same no matter how or in what order it is generated.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special

from .dist import Beta, Empirical, PointMass, RiskDistribution, Uniform, floor_rank
from .errors import DomainError, ScreeningError
from .policy import (
    AllocationResult,
    Budgets,
    allocate_greedy_veto,
    allocate_two_stage,
    band_ranks,
    budget_units,
)
from .solver import fixed_point_solve

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_STREAM_MU, _STREAM_Y = 0, 1


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_seed(*parts: int) -> int:
    """Deterministically fold integers into one 64-bit seed."""
    z = np.uint64(0x5EED)
    with np.errstate(over="ignore"):
        for p in parts:
            z = _splitmix64(np.asarray(z ^ (np.uint64(int(p) & 0xFFFFFFFFFFFFFFFF)), dtype=np.uint64))
    return int(z)


def counter_uniforms(seed: int, index: np.ndarray, stream: int) -> np.ndarray:
    """Uniforms in [0, 1) keyed by (seed, unit index, stream)."""
    key = np.uint64(derive_seed(seed, stream))
    with np.errstate(over="ignore"):
        z = _splitmix64(np.asarray(index, dtype=np.uint64) ^ key)
        z = _splitmix64(z)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def draw_risk(d: RiskDistribution, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF transform of uniforms for the sampleable families."""
    if isinstance(d, Uniform):
        return u.copy()
    if isinstance(d, PointMass):
        return np.full_like(u, d.c)
    if isinstance(d, Beta):
        return special.betaincinv(d.t, d.t, u)
    if isinstance(d, Empirical):
        # resample the observed scores
        idx = np.minimum((u * d.n).astype(np.int64), d.n - 1)
        return d.sorted_scores[idx]
    raise DomainError(f"cannot sample from {d!r}")


@dataclass(frozen=True, eq=False)
class Population:
    mu: np.ndarray
    y: np.ndarray
    seed: int | None = None
    source: str = ""
    ids: tuple | None = None

    def __post_init__(self):
        mu, y = np.asarray(self.mu, dtype=float), np.asarray(self.y)
        if mu.shape != y.shape or mu.ndim != 1 or mu.size == 0:
            raise DomainError("mu and y must be nonempty 1-d arrays of equal length")
        if mu.min() < 0 or mu.max() > 1:
            raise DomainError("every mu must lie in [0, 1]")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("every y must be 0 or 1")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "y", y.astype(np.int8))

    @property
    def n(self) -> int:
        return int(self.mu.size)

    @cached_property
    def distribution(self) -> Empirical:
        return Empirical(self.mu)

    @property
    def order(self) -> np.ndarray:
        return self.distribution.order


def sample_population(d: RiskDistribution, n: int, seed: int) -> Population:
    """Draw n units: mu from ``d``, then y ~ Bernoulli(mu)."""
    if n < 1:
        raise DomainError("n must be at least 1")
    idx = np.arange(n, dtype=np.uint64)
    mu = draw_risk(d, counter_uniforms(seed, idx, _STREAM_MU))
    y = (counter_uniforms(seed, idx, _STREAM_Y) < mu).astype(np.int8)
    return Population(mu, y, seed=seed, source=f"sampled:{d.spec}")


def outcomes_for(mu, seed: int) -> np.ndarray:
    """Bernoulli outcomes for fixed risks, keyed the same way as sampling."""
    mu = np.asarray(mu, dtype=float)
    u = counter_uniforms(seed, np.arange(mu.size, dtype=np.uint64), _STREAM_Y)
    return (u < mu).astype(np.int8)


class PolicyKind(str, enum.Enum):
    OPTIMAL = "optimal"
    NO_SCREENING = "none"
    RANDOM = "random"
    HEURISTIC = "heuristic"


def run_policy(pop: Population, b: Budgets, kind: PolicyKind, seed: int = 0) -> AllocationResult:
    """Realized allocation of one policy kind on one population.

    * optimal: fixed-point band on the population's own score distribution
    * none: top floor(beta*n) units by score
    * random: floor(alpha*n) units screened uniformly at random, then a
      greedy walk down the score ranking that skips screened negatives
    * heuristic: the floor(alpha*n) units ranked just below the
      no-screening cut are screened
    """
    kind = PolicyKind(kind)
    n = pop.n
    budget = budget_units(b.beta, n)
    k = floor_rank(b.alpha * n)
    asc = pop.order
    desc = asc[::-1]
    screened = np.zeros(n, dtype=bool)
    if kind is PolicyKind.NO_SCREENING or k == 0:
        return allocate_two_stage(pop.y, desc, screened, budget)
    if kind is PolicyKind.OPTIMAL:
        policy, _ = fixed_point_solve(pop.distribution, b)
        start, stop = band_ranks(policy, n)
        screened[asc[start:stop]] = True
        return allocate_two_stage(pop.y, desc, screened, budget)
    if kind is PolicyKind.HEURISTIC:
        stop = n - budget
        screened[asc[max(stop - k, 0):stop]] = True
        return allocate_two_stage(pop.y, desc, screened, budget)
    rng = np.random.default_rng(derive_seed(seed))
    screened[rng.choice(n, size=k, replace=False)] = True
    return allocate_greedy_veto(pop.y, desc, screened, budget)


@dataclass(frozen=True)
class ExperimentRow:
    dist: str
    kind: str
    alpha: float
    rep: int
    precision: float
    allocated: int
    screened: int
    tp: int
    status: str = "ok"


@dataclass(frozen=True)
class AggregateRow:
    dist: str
    kind: str
    alpha: float
    mean: float
    std: float
    reps: int


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple
    aggregates: tuple

    def aggregate(self, dist: str, kind: str, alpha: float) -> AggregateRow:
        for a in self.aggregates:
            if a.dist == dist and a.kind == kind and abs(a.alpha - alpha) < 1e-12:
                return a
        raise KeyError((dist, kind, alpha))


def aggregate_rows(rows) -> tuple:
    """Mean and sample standard deviation (n-1; 0 for one rep) per cell."""
    cells: dict = {}
    for r in rows:
        if r.status == "ok":
            cells.setdefault((r.dist, r.kind, r.alpha), []).append(r.precision)
    out = []
    for (dist, kind, alpha), vals in cells.items():
        arr = np.array(vals)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out.append(AggregateRow(dist, kind, alpha, float(arr.mean()), std, int(arr.size)))
    return tuple(out)


def _rep_rows(d, beta, grid, kinds, n, rep, master_seed, pop=None):
    pop_seed = derive_seed(master_seed, rep)
    if pop is None:
        pop = sample_population(d, n, pop_seed)
    else:
        # fixed risks (loaded scores): only outcomes vary across reps
        pop = Population(pop.mu, outcomes_for(pop.mu, pop_seed), seed=pop_seed, source=pop.source)
    rows = []
    for kind in kinds:
        for j, alpha in enumerate(grid):
            cell_seed = derive_seed(master_seed, rep, j, list(PolicyKind).index(kind))
            try:
                res = run_policy(pop, Budgets(alpha, beta), kind, cell_seed)
            except ScreeningError:
                rows.append(ExperimentRow(d.spec, kind.value, alpha, rep, float("nan"), 0, 0, 0, "failed"))
                continue
            rows.append(ExperimentRow(d.spec, kind.value, alpha, rep, res.precision,
                                      res.allocated, res.screened, res.true_positives))
    return rows


def run_experiment(d: RiskDistribution, beta: float, alpha_grid, kinds, n: int, reps: int,
                   master_seed: int = 0, threads: int = 1, population: Population | None = None
                   ) -> ExperimentReport:
    """Paired replications: every (kind, alpha) cell of a rep sees the same population.

    ``population`` fixes the risks (e.g. loaded from a score file); outcomes
    are then redrawn per replication.  Output order is (kind, alpha, rep)
    regardless of ``threads``.
    """
    if reps < 1:
        raise DomainError("reps must be at least 1")
    grid = [float(a) for a in alpha_grid]
    kinds = [PolicyKind(k) for k in kinds]
    for a in grid:
        Budgets(a, beta)
    args = [(d, beta, grid, kinds, n, r, master_seed, population) for r in range(reps)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(lambda a: _rep_rows(*a), args))
    else:
        per_rep = [_rep_rows(*a) for a in args]
    rank = {k: i for i, k in enumerate(kinds)}
    rows = sorted(
        (r for rr in per_rep for r in rr),
        key=lambda r: (rank[PolicyKind(r.kind)], r.alpha, r.rep),
    )
    return ExperimentReport(tuple(rows), aggregate_rows(rows))

"""Risk-score distributions on [0, 1].

Every distribution exposes the same primitives: ``cdf``, ``quantile``
(left-continuous generalized inverse), ``partial_expectation`` over a
half-open score interval ``(a, b]`` and ``quantile_integral`` over a range
of probability levels.  The last one is what the solvers use, because it
stays well defined on atoms and on empirical samples where the score-space
interval may be empty.

All objects are immutable after construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special, stats

from .errors import (
    DegenerateBandError,
    DomainError,
    InputFormatError,
    UnsupportedDistributionError,
)

# absorbs float noise in q*n before taking ceil/floor of a rank
RANK_EPS = 1e-9


def _check_unit(name, x):
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{name}={x!r} outside [0, 1]")


def ceil_rank(x: float) -> int:
    return math.ceil(x - RANK_EPS)


def floor_rank(x: float) -> int:
    return math.floor(x + RANK_EPS)


class RiskDistribution:
    """Base class; subclasses implement the ``_`` hooks."""

    kind = "abstract"

    def cdf(self, x: float) -> float:
        _check_unit("x", x)
        return self._cdf(x)

    def quantile(self, q: float) -> float:
        _check_unit("q", q)
        return self._quantile(q)

    def partial_expectation(self, a: float, b: float) -> float:
        """E[mu; a < mu <= b]."""
        _check_unit("a", a)
        _check_unit("b", b)
        if a > b:
            raise DomainError(f"empty interval: a={a} > b={b}")
        if a == b:
            return 0.0
        return self._partial_expectation(a, b)

    def band_mean(self, a: float, b: float) -> float:
        mass = self.cdf(b) - self.cdf(a)
        if not mass > 0.0:
            raise DegenerateBandError(f"band ({a}, {b}] has zero mass")
        return self.partial_expectation(a, b) / mass

    def quantile_integral(self, lo: float, hi: float) -> float:
        """Integral of the quantile function over levels [lo, hi].

        Equals the partial expectation over the matching score band for
        continuous distributions, and splits atoms proportionally otherwise.
        """
        _check_unit("lo", lo)
        _check_unit("hi", hi)
        if lo > hi:
            raise DomainError(f"empty level range: lo={lo} > hi={hi}")
        if lo == hi:
            return 0.0
        return self._quantile_integral(lo, hi)

    def mean(self) -> float:
        return self._quantile_integral(0.0, 1.0)

    def pdf(self, x: float) -> float:
        raise UnsupportedDistributionError(f"{self.spec} has no density")

    @property
    def is_continuous(self) -> bool:
        return False

    @property
    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(RiskDistribution):
    kind = "uniform"

    def _cdf(self, x):
        return float(x)

    def _quantile(self, q):
        return float(q)

    def _partial_expectation(self, a, b):
        return 0.5 * (b * b - a * a)

    def _quantile_integral(self, lo, hi):
        return 0.5 * (hi * hi - lo * lo)

    def pdf(self, x):
        _check_unit("x", x)
        return 1.0

    @property
    def is_continuous(self):
        return True

    @property
    def spec(self):
        return "uniform"


@dataclass(frozen=True)
class Beta(RiskDistribution):
    """Symmetric Beta(t, t).

    The upper half is evaluated through the reflection mu -> 1 - mu so that
    tail quantities keep full relative precision even for t << 1, where the
    upper quantiles sit within a few ulps of 1.
    """

    t: float
    kind = "beta"

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise DomainError(f"Beta parameter t={self.t!r} must be positive")

    # lower-half primitives (arguments <= 0.5)
    def _low_cdf(self, x):
        return float(special.betainc(self.t, self.t, x))

    def _low_pe(self, a, b):
        # E[mu; mu <= x] = E[mu] * I_{t+1,t}(x) and E[mu] = 1/2
        t = self.t
        return 0.5 * float(special.betainc(t + 1, t, b) - special.betainc(t + 1, t, a))

    def _low_quantile(self, p):
        if p <= 0.0:
            return 0.0
        t = self.t
        f = lambda x: special.betainc(t, t, x)
        x = float(special.betaincinv(t, t, p))
        if not math.isfinite(x):
            x = 0.0  # betaincinv gives nan for extreme p; the bracket below recovers
        # values below ~1e-300 are indistinguishable from 0 for every caller
        x = min(max(x, 1e-300), 0.5)
        # bracket the generalized inverse, then bisect to machine precision
        delta = 1e-8
        if f(x) >= p:
            hi, lo = x, x * (1 - delta)
            while lo > 0.0 and f(lo) >= p:
                delta *= 16
                lo = x * (1 - delta) if delta < 1 else 0.0
        else:
            lo, hi = x, min(x * (1 + delta), 0.5)
            while hi < 0.5 and f(hi) < p:
                delta *= 16
                hi = min(x * (1 + delta), 0.5)
        for _ in range(2000):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if f(mid) >= p:
                hi = mid
            else:
                lo = mid
        return hi

    def _cdf(self, x):
        if x <= 0.5:
            return self._low_cdf(x)
        return 1.0 - self._low_cdf(1.0 - x)

    def _quantile(self, q):
        if q <= 0.5:
            return self._low_quantile(q)
        return 1.0 - self._low_quantile(1.0 - q)

    def _partial_expectation(self, a, b):
        total = 0.0
        if a < 0.5:
            total += self._low_pe(a, min(b, 0.5))
        if b > 0.5:
            a2 = max(a, 0.5)
            # mass of (a2, b] minus E[1 - mu] over it, reflected into the lower half
            mass = self._low_cdf(1.0 - a2) - self._low_cdf(1.0 - b)
            total += mass - self._low_pe(1.0 - b, 1.0 - a2)
        return total

    def _quantile_integral(self, lo, hi):
        total = 0.0
        if lo < 0.5:
            h = min(hi, 0.5)
            total += self._low_pe(self._low_quantile(lo), self._low_quantile(h))
        if hi > 0.5:
            l2 = max(lo, 0.5)
            total += (hi - l2) - self._low_pe(
                self._low_quantile(1.0 - hi), self._low_quantile(1.0 - l2)
            )
        return total

    def pdf(self, x):
        _check_unit("x", x)
        return float(stats.beta.pdf(x, self.t, self.t))

    @property
    def is_continuous(self):
        return True

    @property
    def spec(self):
        return f"beta:t={self.t:g}"


@dataclass(frozen=True)
class PointMass(RiskDistribution):
    c: float
    kind = "pointmass"

    def __post_init__(self):
        _check_unit("c", self.c)

    def _cdf(self, x):
        return 1.0 if x >= self.c else 0.0

    def _quantile(self, q):
        return float(self.c)

    def _partial_expectation(self, a, b):
        return float(self.c) if a < self.c <= b else 0.0

    def _quantile_integral(self, lo, hi):
        return self.c * (hi - lo)

    def mean(self):
        return float(self.c)

    @property
    def spec(self):
        return f"pointmass:c={self.c:g}"


class Empirical(RiskDistribution):
    """Empirical distribution of n scores, each carrying mass 1/n.

    Scores are kept sorted ascending; ``order[k]`` is the original index of
    the k-th smallest score.  The sort is stable, so tied scores keep their
    input order and rank-based cuts are deterministic.
    """

    kind = "empirical"

    def __init__(self, scores, ids=None, source=None):
        arr = np.asarray(scores, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise DomainError("empirical distribution needs a nonempty 1-d score list")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise DomainError("empirical scores must lie in [0, 1]")
        order = np.argsort(arr, kind="stable")
        self._order = order
        self._sorted = arr[order]
        self._prefix = np.concatenate(([0.0], np.cumsum(self._sorted)))
        self._ids = None if ids is None else tuple(ids)
        self._source = source
        for a in (self._order, self._sorted, self._prefix):
            a.setflags(write=False)

    @classmethod
    def from_csv(cls, path):
        ids, scores = read_score_file(path)
        return cls(scores, ids=ids, source=str(path))

    @property
    def n(self) -> int:
        return int(self._sorted.size)

    @property
    def sorted_scores(self) -> np.ndarray:
        return self._sorted

    @property
    def order(self) -> np.ndarray:
        return self._order

    @property
    def ids(self):
        return self._ids

    def _cdf(self, x):
        return int(np.searchsorted(self._sorted, x, side="right")) / self.n

    def _quantile(self, q):
        rank = max(1, ceil_rank(q * self.n))
        return float(self._sorted[min(rank, self.n) - 1])

    def _partial_expectation(self, a, b):
        i = int(np.searchsorted(self._sorted, a, side="right"))
        j = int(np.searchsorted(self._sorted, b, side="right"))
        return float(self._prefix[j] - self._prefix[i]) / self.n

    def _level_integral(self, u):
        # integral of Q over [0, u]; Q is constant on ((k-1)/n, k/n]
        n = self.n
        k = min(floor_rank(u * n), n)
        partial = u * n - k
        out = float(self._prefix[k])
        if k < n and partial > 0:
            out += partial * float(self._sorted[k])
        return out / n

    def _quantile_integral(self, lo, hi):
        return self._level_integral(hi) - self._level_integral(lo)

    def slice_mean(self, start: int, stop: int) -> float:
        """Mean of sorted scores with ascending ranks in [start, stop)."""
        if not 0 <= start < stop <= self.n:
            raise DegenerateBandError(f"empty rank slice [{start}, {stop})")
        return float(self._prefix[stop] - self._prefix[start]) / (stop - start)

    def mean(self):
        return float(self._prefix[-1]) / self.n

    @property
    def spec(self):
        if self._source:
            return f"scores:{self._source}"
        return f"empirical:n={self.n}"

    def __repr__(self):
        return f"Empirical(n={self.n})"


# module-level wrappers, for callers who prefer a functional style


def cdf(d: RiskDistribution, x: float) -> float:
    return d.cdf(x)


def quantile(d: RiskDistribution, q: float) -> float:
    return d.quantile(q)


def partial_expectation(d: RiskDistribution, a: float, b: float) -> float:
    return d.partial_expectation(a, b)


def band_mean(d: RiskDistribution, a: float, b: float) -> float:
    return d.band_mean(a, b)


def read_score_file(path, value_column="score", allowed=None):
    """Read an ``id,<value_column>`` CSV.

    Returns ``(ids, values)``.  Any malformed row raises
    :class:`InputFormatError` naming the line.  ``allowed`` optionally
    restricts values to a finite set (used for 0/1 labels).
    """
    path = Path(path)
    ids, values, seen = [], [], set()
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputFormatError(str(exc), path=path) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputFormatError("empty file", path=path, line=1)
        if [h.strip() for h in header] != ["id", value_column]:
            raise InputFormatError(
                f"expected header 'id,{value_column}', got {','.join(header)!r}",
                path=path,
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputFormatError(f"expected 2 columns, got {len(row)}", path, lineno)
            uid, raw = row[0].strip(), row[1].strip()
            if not uid:
                raise InputFormatError("missing id", path, lineno)
            if uid in seen:
                raise InputFormatError(f"duplicate id {uid!r}", path, lineno)
            try:
                val = float(raw)
            except ValueError:
                raise InputFormatError(f"not a number: {raw!r}", path, lineno) from None
            if not math.isfinite(val) or not 0.0 <= val <= 1.0:
                raise InputFormatError(f"{value_column} {raw!r} outside [0, 1]", path, lineno)
            if allowed is not None and val not in allowed:
                raise InputFormatError(f"{value_column} {raw!r} not in {sorted(allowed)}", path, lineno)
            seen.add(uid)
            ids.append(uid)
            values.append(val)
    if not ids:
        raise InputFormatError("no data rows", path=path)
    return ids, np.asarray(values)


def parse_distribution(text: str) -> RiskDistribution:
    """Parse ``uniform``, ``beta:t=<t>``, ``pointmass:c=<c>`` or ``scores:<path>``."""
    text = text.strip()
    if text == "uniform":
        return Uniform()
    head, _, rest = text.partition(":")
    if head == "scores" and rest:
        return Empirical.from_csv(rest)
    if head in ("beta", "pointmass"):
        key, _, value = rest.partition("=")
        want = "t" if head == "beta" else "c"
        if key != want or not value:
            raise DomainError(f"bad distribution spec {text!r}; expected {head}:{want}=<value>")
        try:
            num = float(value)
        except ValueError:
            raise DomainError(f"bad number in distribution spec {text!r}") from None
        return Beta(num) if head == "beta" else PointMass(num)
    raise DomainError(
        f"unknown distribution spec {text!r}; use uniform, beta:t=<t>, pointmass:c=<c> or scores:<path>"
    )

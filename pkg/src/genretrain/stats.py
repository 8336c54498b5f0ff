"""ECDFs, two-sample Kolmogorov-Smirnov, Local Outlier Factor and RMSE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

EXACT_MAX = 12


class ECDF:
    """Right-continuous empirical CDF of a sample."""

    def __init__(self, samples):
        x = np.asarray(samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise DomainError("ECDF of an empty sample")
        self.x = np.sort(x)

    def __call__(self, t):
        return np.searchsorted(self.x, t, side="right") / self.x.size


def ecdf(samples):
    return ECDF(samples)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    method: str


def _check(a, b):
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("KS test needs two nonempty samples")
    return a, b


def _boundary_counts(a, b):
    """Counts (i, j) of a/b samples <= each distinct pooled value."""
    pooled = np.unique(np.concatenate([a, b]))
    i = np.searchsorted(a, pooled, side="right")
    j = np.searchsorted(b, pooled, side="right")
    return i, j


def ks_numerator(a, b):
    """``D * n * m`` as an exact integer (sorted inputs)."""
    i, j = _boundary_counts(a, b)
    return int(np.max(np.abs(i * b.size - j * a.size)))


def exact_pvalue(a, b):
    """P(D >= D_obs) over all label assignments of the pooled sample.

    Counts monotone lattice paths that keep ``|i*m - j*n| < D_obs*n*m`` at
    every boundary between distinct pooled values; ties therefore collapse
    onto their pooled-rank multiset.
    """
    a, b = _check(a, b)
    n, m = a.size, b.size
    d_num = ks_numerator(a, b)
    if d_num == 0:
        return 1.0
    pooled = np.sort(np.concatenate([a, b]))
    # checkpoints are positions k (samples consumed) at the end of tie groups
    ends = np.flatnonzero(np.append(pooled[1:] != pooled[:-1], True)) + 1
    check = np.zeros(n + m + 1, dtype=bool)
    check[ends] = True
    paths = [[0] * (m + 1) for _ in range(n + 1)]
    paths[0][0] = 1
    for i in range(n + 1):
        row = paths[i]
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            if check[i + j] and abs(i * m - j * n) >= d_num:
                row[j] = 0
                continue
            total = 0
            if i > 0:
                total += paths[i - 1][j]
            if j > 0:
                total += row[j - 1]
            row[j] = total
    inside = paths[n][m]
    total = math.comb(n + m, n)
    return (total - inside) / total


def kolmogorov_sf(lam):
    """Asymptotic P(K > lam) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # theta-function form converges fast for small lam
        s = sum(
            math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * lam * lam))
            for k in range(1, 20)
        )
        p = 1.0 - math.sqrt(2.0 * math.pi) / lam * s
    else:
        p = 2.0 * sum(
            (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam) for k in range(1, 101)
        )
    return min(1.0, max(0.0, p))


def ks_two_sample(a, b, exact_max=EXACT_MAX):
    a, b = _check(a, b)
    n, m = a.size, b.size
    d = ks_numerator(a, b) / (n * m)
    if n <= exact_max and m <= exact_max:
        return KsResult(d, exact_pvalue(a, b), "exact")
    lam = d * math.sqrt(n * m / (n + m))
    return KsResult(d, kolmogorov_sf(lam), "asymptotic")


# ---------------------------------------------------------------- LOF


@dataclass(frozen=True)
class LofScore:
    factor: float
    k: int


def _as_points(points):
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DomainError("points must be scalars or vectors")
    return x


def _distances(x, y):
    if x.shape[1] == 1:
        return np.abs(x - y.T)
    d2 = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    return np.sqrt(np.maximum(d2, 0.0))


def _lrd(mean_reach):
    # coincident neighbourhoods: finite, equal densities
    return 1.0 / np.maximum(mean_reach, 1e-12)


class LofModel:
    """Neighbourhoods and reachability densities of a reference set.

    ``factors()`` scores the reference points among themselves;
    ``score_samples`` scores new points against the fitted reference.
    """

    def __init__(self, points, k=20):
        self.points = _as_points(points)
        n = len(self.points)
        if k < 1 or k >= n:
            raise DomainError(f"need 1 <= k < number of points ({n}), got k={k}")
        self.k = k
        d = _distances(self.points, self.points)
        np.fill_diagonal(d, np.inf)
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        self.neighbors = order
        nd = np.take_along_axis(d, order, axis=1)
        self.k_distance = nd[:, -1]
        reach = np.maximum(nd, self.k_distance[order])
        self.lrd = _lrd(reach.mean(axis=1))

    def factors(self):
        return self.lrd[self.neighbors].mean(axis=1) / self.lrd

    def score_samples(self, queries):
        q = _as_points(queries)
        d = _distances(q, self.points)
        order = np.argsort(d, axis=1, kind="stable")[:, : self.k]
        nd = np.take_along_axis(d, order, axis=1)
        reach = np.maximum(nd, self.k_distance[order])
        lrd_q = _lrd(reach.mean(axis=1))
        return self.lrd[order].mean(axis=1) / lrd_q


def lof(points, k=20):
    """Local Outlier Factor of every point; needs ``1 <= k < len(points)``."""
    x = _as_points(points)
    if len(x) < 2:
        raise DomainError("LOF needs at least two points")
    if k < 1:
        raise DomainError("k must be positive")
    if k >= len(x):
        raise DomainError(f"k={k} must be smaller than the number of points ({len(x)})")
    model = LofModel(x, k)
    if np.all(x == x[0]):
        return [LofScore(1.0, k) for _ in range(len(x))]
    return [LofScore(float(f), k) for f in model.factors()]


def rmse(pred, actual):
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise DomainError(f"length mismatch {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise DomainError("RMSE of empty input")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))

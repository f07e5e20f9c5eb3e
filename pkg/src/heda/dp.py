"""Differential-privacy publishing with insensitive microaggregation (IMA).

Pipeline: pick a per-attribute budget from how guessable each column is,
cluster records along a fixed total order so one changed record moves at most
one record per cluster, replace records by centroids, then add Laplace noise
calibrated to the reduced sensitivity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS_MIN = 0.01
EPS_MAX = 10.0


class DPParameterError(ValueError):
    pass


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


# --------------------------------------------------------------------------
# Budget selection
# --------------------------------------------------------------------------


def rho_upper_bound(column) -> float:
    """Share of the modal value: an adversary's best single guess success rate."""
    col = np.asarray(column).ravel()
    if col.size == 0:
        raise DPParameterError("empty column")
    _, counts = np.unique(col, return_counts=True)
    return counts.max() / col.size


@dataclass(frozen=True)
class AttributeStats:
    delta_f: float  # largest absolute attribute value
    delta_v: float  # value spread, max - min
    count_max: int
    m: int

    def __post_init__(self):
        if not 1 <= self.count_max <= self.m:
            raise DPParameterError("count_max must lie in [1, m]")
        if self.delta_f < 0:
            raise DPParameterError("delta_f must be non-negative")

    @property
    def rho(self) -> float:
        return self.count_max / self.m

    @classmethod
    def from_column(cls, column) -> "AttributeStats":
        col = np.asarray(column, dtype=float).ravel()
        if col.size == 0:
            raise DPParameterError("empty column")
        _, counts = np.unique(col, return_counts=True)
        return cls(float(np.abs(col).max()), float(col.max() - col.min()), int(counts.max()), col.size)


def epsilon_detail(stats: AttributeStats, eps_min: float = EPS_MIN, eps_max: float = EPS_MAX):
    """``(epsilon, flag)``; ``flag`` names the degeneracy or clamp that fired, else ``None``."""
    if stats.m < 2:
        raise DPParameterError("need at least two records")
    if stats.count_max == stats.m:
        return eps_max, "constant-column"
    if stats.delta_v <= 0:
        return eps_max, "zero-spread"
    # (m-1) rho / (1-rho) with rho = c/m simplifies to (m-1) c / (m-c)
    ratio = (stats.m - 1) * stats.count_max / (stats.m - stats.count_max)
    raw = stats.delta_f / stats.delta_v * math.log(ratio)
    if raw < eps_min:
        return eps_min, "clamped-min"
    if raw > eps_max:
        return eps_max, "clamped-max"
    return raw, None


def epsilon_for_attribute(stats: AttributeStats, eps_min: float = EPS_MIN, eps_max: float = EPS_MAX) -> float:
    return epsilon_detail(stats, eps_min, eps_max)[0]


@dataclass
class EpsilonBudget:
    per_attribute: np.ndarray
    flags: list = field(default_factory=list)
    stats: list = field(default_factory=list)

    def __post_init__(self):
        self.per_attribute = np.asarray(self.per_attribute, dtype=float)
        if np.any(self.per_attribute <= 0):
            raise DPParameterError("every epsilon must be positive")
        if not self.flags:
            self.flags = [None] * len(self.per_attribute)

    @property
    def epsilon(self) -> float:
        """Attributes are disjoint releases, so the dataset budget is the largest one."""
        return float(self.per_attribute.max())

    @classmethod
    def uniform(cls, eps: float, d: int) -> "EpsilonBudget":
        return cls(np.full(d, float(eps)))

    def to_dict(self) -> dict:
        return {"per_attribute": self.per_attribute.tolist(), "epsilon": self.epsilon, "flags": self.flags}


def select_epsilon(X, eps_min: float = EPS_MIN, eps_max: float = EPS_MAX) -> EpsilonBudget:
    X = _as_2d(X)
    stats = [AttributeStats.from_column(X[:, j]) for j in range(X.shape[1])]
    detail = [epsilon_detail(s, eps_min, eps_max) for s in stats]
    return EpsilonBudget([e for e, _ in detail], [f for _, f in detail], stats)


# --------------------------------------------------------------------------
# Insensitive microaggregation
# --------------------------------------------------------------------------


@dataclass
class ClusteredDataset:
    clusters: list  # arrays of original record indices, in creation order
    centroids: np.ndarray
    k: int
    boundaries: list  # (P, P') used in each loop

    @property
    def m(self) -> int:
        return sum(len(c) for c in self.clusters)

    def labels(self) -> np.ndarray:
        out = np.empty(self.m, dtype=int)
        for ci, members in enumerate(self.clusters):
            out[members] = ci
        return out

    def replaced(self) -> np.ndarray:
        """Each record replaced by its cluster centroid, in original order."""
        return self.centroids[self.labels()]


def normalized_distance(X, point, spread) -> np.ndarray:
    """Range-normalized Euclidean distance; constant attributes contribute nothing."""
    safe = np.where(spread > 0, spread, 1.0)
    z = np.where(spread > 0, (X - point) / safe, 0.0)
    return np.sqrt((z * z).sum(axis=1))


def _take_nearest(X, idx, point, spread, k):
    dist = normalized_distance(X[idx], point, spread)
    # idx is ascending, so a stable sort breaks distance ties by record index
    order = np.argsort(dist, kind="stable")
    return idx[np.sort(order[:k])], idx[np.sort(order[k:])]


def ima_cluster(X, k: int) -> ClusteredDataset:
    X = _as_2d(X)
    m = X.shape[0]
    if k < 1 or m < 2 * k:
        raise DPParameterError(f"need k >= 1 and m >= 2k (m={m}, k={k})")
    remaining = np.arange(m)
    clusters, boundaries = [], []
    while remaining.size >= 2 * k:
        sub = X[remaining]
        P, P_low = sub.max(axis=0), sub.min(axis=0)
        spread = P - P_low
        boundaries.append((P, P_low))
        near_top, remaining = _take_nearest(X, remaining, P, spread, k)
        near_bottom, remaining = _take_nearest(X, remaining, P_low, spread, k)
        clusters += [near_top, near_bottom]
    if remaining.size:
        clusters.append(remaining)
    centroids = np.array([X[c].mean(axis=0) for c in clusters])
    return ClusteredDataset(clusters, centroids, k, boundaries)


def best_cluster_size(m: int) -> int:
    """Largest ``k`` with ``k <= sqrt(m / 2)``, i.e. ``floor(sqrt(m / 2))``."""
    return max(1, math.isqrt(m // 2))


def ima_sensitivity(delta_f: float, k: int, m: int) -> float:
    """At most ``ceil(m / 2k)`` centroids move, each by at most ``delta_f / k``."""
    return delta_f * (-(-m // (2 * k)) / k)


# --------------------------------------------------------------------------
# Laplace mechanism
# --------------------------------------------------------------------------


def attribute_rng(seed: int, j: int) -> np.random.Generator:
    """Independent, reproducible stream for attribute ``j``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(j)]))


def laplace_sample(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF Laplace(0, scale) draws."""
    u = rng.random(size) - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
    return -scale * np.sign(u) * np.log(tail)


def laplace_cdf(x, scale: float):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / scale), 1.0 - 0.5 * np.exp(-x / scale))


@dataclass
class NoisedDataset:
    X: np.ndarray
    epsilon: np.ndarray
    k: int | None
    seed: int
    delta_f: np.ndarray
    sensitivity: np.ndarray
    labels: np.ndarray | None = None

    @property
    def noise_scale(self) -> np.ndarray:
        return self.sensitivity / self.epsilon

    def report(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "epsilon": self.epsilon.tolist(),
            "delta_f": self.delta_f.tolist(),
            "delta_f_prime": self.sensitivity.tolist(),
        }


def _noise(base, sensitivity, eps, seed, noise_mask):
    out = base.copy()
    for j in range(out.shape[1]):
        if noise_mask is not None and not noise_mask[j]:
            continue
        out[:, j] += laplace_sample(sensitivity[j] / eps[j], out.shape[0], attribute_rng(seed, j))
    return out


def _budget_vector(budget, d):
    eps = budget.per_attribute if isinstance(budget, EpsilonBudget) else np.asarray(budget, dtype=float)
    eps = np.broadcast_to(eps, (d,)).astype(float)
    if np.any(eps <= 0):
        raise DPParameterError("epsilon must be positive")
    return eps


def publish_ima_dp(X, k: int | None = None, budget: EpsilonBudget | None = None, seed: int = 0,
                   labels=None, noise_mask=None) -> NoisedDataset:
    """Microaggregate with cluster size ``k`` (default: best size), then add Laplace noise.

    ``noise_mask`` marks the attributes that receive noise (all by default).
    Labels pass through untouched.
    """
    X = _as_2d(X)
    m, d = X.shape
    k = best_cluster_size(m) if k is None else int(k)
    budget = budget if budget is not None else select_epsilon(X)
    eps = _budget_vector(budget, d)
    delta_f = np.abs(X).max(axis=0)
    sens = np.array([ima_sensitivity(df, k, m) for df in delta_f])
    out = _noise(ima_cluster(X, k).replaced(), sens, eps, seed, noise_mask)
    return NoisedDataset(out, eps, k, seed, delta_f, sens, None if labels is None else np.asarray(labels))


def publish_standard_dp(X, budget: EpsilonBudget | None = None, seed: int = 0, labels=None,
                        noise_mask=None) -> NoisedDataset:
    """Baseline: Laplace noise with the raw sensitivity straight on the records."""
    X = _as_2d(X)
    eps = _budget_vector(budget if budget is not None else select_epsilon(X), X.shape[1])
    delta_f = np.abs(X).max(axis=0)
    out = _noise(X, delta_f, eps, seed, noise_mask)
    return NoisedDataset(out, eps, None, seed, delta_f, delta_f.copy(),
                         None if labels is None else np.asarray(labels))


# --------------------------------------------------------------------------
# Utility and risk metrics
# --------------------------------------------------------------------------


def sse(X, X_pub) -> float:
    X, X_pub = _as_2d(X), _as_2d(X_pub)
    if X.shape != X_pub.shape:
        raise DPParameterError("shape mismatch")
    return float(((X - X_pub) ** 2).sum())


def record_linkage(X, X_pub, chunk: int = 512, rtol: float = 1e-9) -> float:
    """Expected fraction of published records an attacker links to their source.

    Each published record is matched to the set ``R`` of originals at minimum
    range-normalized distance; it scores ``1/|R|`` when its source is in ``R``.
    """
    X, X_pub = _as_2d(X), _as_2d(X_pub)
    if X.shape != X_pub.shape:
        raise DPParameterError("shape mismatch")
    m = X.shape[0]
    spread = X.max(axis=0) - X.min(axis=0)
    scale = np.where(spread > 0, spread, 1.0)
    live = spread > 0
    Z, Zp = X[:, live] / scale[live], X_pub[:, live] / scale[live]
    sq = (Z * Z).sum(axis=1)
    total = 0.0
    for start in range(0, m, chunk):
        block = Zp[start:start + chunk]
        d2 = np.maximum((block * block).sum(axis=1)[:, None] + sq[None, :] - 2.0 * block @ Z.T, 0.0)
        dmin = d2.min(axis=1, keepdims=True)
        tie = d2 <= dmin + rtol * np.maximum(dmin, 1e-300) + 1e-12
        rows = np.arange(block.shape[0])
        hit = tie[rows, start + rows]
        total += (hit / tie.sum(axis=1)).sum()
    return float(total / m)

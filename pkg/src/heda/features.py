"""Feature scoring, cross-provider score negotiation and the high/low split.

High-scoring attributes go through the encrypted training path; the rest are
released through the DP mechanism.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    ranks = np.empty(x.size)
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    return ranks


def kruskal_wallis_h(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = x.size
    r = average_ranks(x)
    h = sum(r[y == g].sum() ** 2 / np.count_nonzero(y == g) for g in np.unique(y))
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, t = np.unique(x, return_counts=True)
    correction = 1.0 - (t**3 - t).sum() / (n**3 - n)
    return 0.0 if correction <= 0 else max(h / correction, 0.0)


def chi_square(x, y, bins: int = 10) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    values = np.unique(x)
    if values.size <= 1:
        return 0.0
    if values.size <= bins:
        cat = np.searchsorted(values, x)
    else:
        edges = np.linspace(x.min(), x.max(), bins + 1)
        cat = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    classes = np.unique(y)
    table = np.array([[np.count_nonzero((cat == c) & (y == g)) for g in classes] for c in np.unique(cat)], float)
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    return float(((table - expected) ** 2 / expected).sum())


def abs_pearson(x, y) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    return 0.0 if denom == 0 else float(abs((x * y).sum()) / denom)


def abs_spearman(x, y) -> float:
    return abs_pearson(average_ranks(x), average_ranks(y))


SCORERS = {
    "kw": kruskal_wallis_h,
    "chi2": chi_square,
    "pearson": abs_pearson,
    "spearman": abs_spearman,
}


@dataclass
class FeatureScores:
    scores: np.ndarray
    method: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)

    @property
    def ranking(self) -> np.ndarray:
        """Attribute indices by descending score; equal scores keep index order."""
        return np.lexsort((np.arange(self.scores.size), -self.scores))

    def to_dict(self) -> dict:
        return {"method": self.method, "scores": self.scores.tolist(), "ranking": self.ranking.tolist()}


def score_features(X, y, method: str = "kw") -> FeatureScores:
    if method not in SCORERS:
        raise ValueError(f"unknown scoring method {method!r}; choose from {sorted(SCORERS)}")
    y = np.asarray(y)
    if np.unique(y).size < 2:
        raise ValueError("scoring needs at least two classes")
    X = np.asarray(X, dtype=float)
    fn = SCORERS[method]
    return FeatureScores([fn(X[:, j], y) for j in range(X.shape[1])], method)


def kw_score(X, y) -> FeatureScores:
    return score_features(X, y, "kw")


def chi2_score(X, y) -> FeatureScores:
    return score_features(X, y, "chi2")


def pearson_score(X, y) -> FeatureScores:
    return score_features(X, y, "pearson")


def spearman_score(X, y) -> FeatureScores:
    return score_features(X, y, "spearman")


def _minmax(s: np.ndarray) -> np.ndarray:
    lo, hi = s.min(), s.max()
    return np.zeros_like(s) if hi == lo else (s - lo) / (hi - lo)


def negotiate_scores(provider_scores) -> FeatureScores:
    """Attribute-wise mean of each provider's min-max normalized scores."""
    provider_scores = list(provider_scores)
    if not provider_scores:
        raise ValueError("no provider scores to negotiate")
    sizes = {s.scores.size for s in provider_scores}
    if len(sizes) != 1:
        raise ValueError("providers disagree on the number of attributes")
    methods = {s.method for s in provider_scores}
    merged = np.mean([_minmax(s.scores) for s in provider_scores], axis=0)
    return FeatureScores(merged, methods.pop() if len(methods) == 1 else "mixed")


@dataclass(frozen=True)
class SplitPlan:
    iota: int
    high: tuple
    low: tuple

    def __post_init__(self):
        d = len(self.high) + len(self.low)
        if not 1 <= self.iota <= d or len(self.high) != self.iota:
            raise ValueError(f"iota must be in [1, {d}]")
        if sorted(self.high + self.low) != list(range(d)):
            raise ValueError("split is not a partition of the attributes")

    @property
    def order(self) -> tuple:
        return self.high + self.low

    def to_dict(self) -> dict:
        return {"iota": self.iota, "high": list(self.high), "low": list(self.low)}


def make_split(scores: FeatureScores, iota: int) -> SplitPlan:
    d = scores.scores.size
    if not 1 <= iota <= d:
        raise ValueError(f"iota must be in [1, {d}], got {iota}")
    rank = [int(j) for j in scores.ranking]
    return SplitPlan(iota, tuple(rank[:iota]), tuple(rank[iota:]))


def order_and_split(X, scores: FeatureScores, iota: int):
    """``(X_high, X_low, plan)``: columns reordered by score and cut after ``iota``."""
    plan = make_split(scores, iota)
    X = np.asarray(X, dtype=float)
    return X[:, list(plan.high)], X[:, list(plan.low)], plan

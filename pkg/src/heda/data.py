"""Tabular datasets: CSV ingestion, encoding, normalization and splitting."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

NUMERIC = "numeric"
DISCRETE = "discrete"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str = NUMERIC
    encoding: dict | None = None  # category -> code, for discrete attributes


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    attributes: list
    name: str = "dataset"
    label_map: dict = field(default_factory=dict)  # raw label -> 0/1
    dropped_rows: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y).astype(int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise DatasetError("X must be m x d with one label per record")
        if not np.isin(self.y, (0, 1)).all():
            raise DatasetError("labels must be binary")
        if np.isnan(self.X).any():
            raise DatasetError("missing values remain after preprocessing")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def names(self) -> list:
        return [a.name for a in self.attributes]

    def subset(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])

    def with_X(self, X) -> "Dataset":
        return replace(self, X=np.asarray(X, dtype=float))

    def to_frame(self, label: str = "label") -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=self.names)
        df[label] = self.y
        return df


def load_csv(path, label: str | None = None, *, discrete=None, ignore=(), positive=None,
             missing: str = "drop", na_values=("?", ""), name: str | None = None) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    ``label`` defaults to the last column. Non-numeric columns, plus any named
    in ``discrete``, become ordinal codes in order of first appearance. Rows
    with missing values are dropped (``missing="drop"``) or filled with the
    column mode (``missing="mode"``). ``positive`` selects the label value
    mapped to 1; otherwise the larger of the two sorted values is.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, na_values=list(na_values), keep_default_na=True, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise DatasetError(f"{path} is empty") from exc
    if df.empty:
        raise DatasetError(f"{path} has no records")
    label = label or df.columns[-1]
    if label not in df.columns:
        raise DatasetError(f"label column {label!r} not found")
    df = df.drop(columns=[c for c in ignore if c in df.columns])

    if missing == "drop":
        before = len(df)
        df = df.dropna().reset_index(drop=True)
        dropped = before - len(df)
        if dropped:
            log.info("%s: dropped %d rows with missing values", path.name, dropped)
    elif missing == "mode":
        dropped = 0
        for c in df.columns:
            if df[c].isna().any():
                df[c] = df[c].fillna(df[c].mode().iloc[0])
    else:
        raise ValueError("missing must be 'drop' or 'mode'")
    if df.empty:
        raise DatasetError(f"{path} has no complete records")

    raw_labels = df.pop(label)
    values = list(pd.unique(raw_labels))
    if len(values) != 2:
        raise DatasetError(f"label {label!r} must be binary, found {len(values)} values")
    pos = positive if positive is not None else sorted(values)[1]
    if pos not in values:
        # CLI input arrives as a string
        pos = next((v for v in values if str(v) == str(pos)), None)
        if pos is None:
            raise DatasetError(f"positive label {positive!r} not present")
    label_map = {str(v): int(v == pos) for v in values}
    y = (raw_labels == pos).astype(int).to_numpy()

    discrete = set(discrete or ())
    attrs, cols = [], []
    for c in df.columns:
        col = df[c]
        if c in discrete or not pd.api.types.is_numeric_dtype(col):
            codes = {str(v): i for i, v in enumerate(pd.unique(col.astype(str)))}
            cols.append(col.astype(str).map(codes).to_numpy(dtype=float))
            attrs.append(Attribute(c, DISCRETE, codes))
        else:
            cols.append(col.to_numpy(dtype=float))
            attrs.append(Attribute(c, NUMERIC))
    X = np.column_stack(cols) if cols else np.zeros((len(df), 0))
    return Dataset(X, y, attrs, name or path.stem, label_map, dropped)


def minmax_normalize(X, bounds=None):
    """Scale each column to ``[0, 1]``; constant columns map to 0. Returns ``(X, (lo, hi))``."""
    X = np.asarray(X, dtype=float)
    lo, hi = bounds if bounds is not None else (X.min(axis=0), X.max(axis=0))
    span = np.where(hi > lo, hi - lo, 1.0)
    return (X - lo) / span, (lo, hi)


def normalize(D: Dataset) -> Dataset:
    return D.with_X(minmax_normalize(D.X)[0])


def split_train_test(D: Dataset, fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle; the first ``ceil(fraction * m)`` records train."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    idx = np.random.default_rng(seed).permutation(D.m)
    n_train = math.ceil(fraction * D.m)
    return D.subset(idx[:n_train]), D.subset(idx[n_train:])


def partition(D: Dataset, n: int, seed: int = 0) -> list:
    """Horizontal partition of the records into ``n`` near-equal provider slices."""
    if not 1 <= n <= D.m:
        raise ValueError("need 1 <= n <= m providers")
    idx = np.random.default_rng(seed).permutation(D.m)
    return [D.subset(np.sort(part)) for part in np.array_split(idx, n)]


def synthetic(m: int, d: int, seed: int = 0, *, separable: bool = False, levels: int | None = None,
              name: str = "synthetic") -> Dataset:
    """Random numeric data in ``[0, 1]`` with a logistic label model.

    ``levels`` rounds attribute values onto that many grid points, which gives
    repeated values like the survey data the DP budget rule expects.
    """
    rng = np.random.default_rng(seed)
    X = rng.random((m, d))
    if levels:
        X = np.round(X * (levels - 1)) / (levels - 1)
    w = rng.normal(size=d) * 3
    z = (X - 0.5) @ w
    if separable:
        y = (z >= 0).astype(int)
    else:
        y = (rng.random(m) < 1.0 / (1.0 + np.exp(-z))).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    attrs = [Attribute(f"a{j}") for j in range(d)]
    return Dataset(X, y, attrs, name)

"""Bundled public datasets.

``bcwd.csv``: Wisconsin breast cancer (699 records, 9 cytology scores, class
2 benign / 4 malignant, ``?`` for missing). ``pima.csv``: Pima Indians
diabetes (532 complete records, 7 attributes, type Yes/No).
"""
from __future__ import annotations

from pathlib import Path

from ..data import Dataset, load_csv

HERE = Path(__file__).resolve().parent


def bcwd_path() -> Path:
    return HERE / "bcwd.csv"


def pima_path() -> Path:
    return HERE / "pima.csv"


def load_bcwd(missing: str = "mode") -> Dataset:
    """All 699 records by default; ``missing="drop"`` keeps the 683 complete ones."""
    return load_csv(bcwd_path(), "class", ignore=("id",), positive=4, missing=missing, name="bcwd")


def load_pima() -> Dataset:
    return load_csv(pima_path(), "type", positive="Yes", name="pima")

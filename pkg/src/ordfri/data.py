"""Datasets, preprocessing and evaluation metrics."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    pass


class Relevance(str, enum.Enum):
    STRONG = "Strong"
    WEAK = "Weak"
    IRRELEVANT = "Irrelevant"

    @property
    def relevant(self) -> bool:
        return self is not Relevance.IRRELEVANT


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix ``X`` (m x n) with ordinal labels ``y`` in ``1..l``."""

    X: np.ndarray
    y: np.ndarray
    l: int | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y)
        if y.ndim != 1 or y.size != X.shape[0]:
            raise DataError(f"need one label per row: X has {X.shape[0]} rows, y has {y.size}")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite value at row {r}, column {c}")
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise DataError("labels must be integers")
        y = y.astype(int)
        l = int(self.l) if self.l is not None else int(y.max(initial=0))
        if l < 2:
            raise DataError("ordinal regression needs at least two bins")
        if y.min() < 1 or y.max() > l:
            raise DataError(f"labels must lie in 1..{l}")
        counts = np.bincount(y, minlength=l + 1)[1:]
        if np.any(counts == 0):
            empty = [j + 1 for j in np.flatnonzero(counts == 0)]
            raise DataError(f"empty bin(s) {empty}")
        names = self.feature_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != X.shape[1]:
                raise DataError("one feature name per column required")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "feature_names", names)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def bin_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.l + 1)[1:]

    def names(self) -> list[str]:
        return list(self.feature_names) if self.feature_names else [f"x{j}" for j in range(self.n)]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.l, self.feature_names)

    def with_X(self, X) -> "Dataset":
        return Dataset(X, self.y, self.l, self.feature_names)


@dataclass(frozen=True, eq=False)
class LupiDataset:
    """Regular data plus privileged features available only while training."""

    regular: Dataset
    X_star: np.ndarray
    priv_names: tuple[str, ...] | None = None

    def __post_init__(self):
        Xs = np.array(self.X_star, dtype=float, copy=True)
        if Xs.ndim == 1:
            Xs = Xs[:, None]
        if Xs.shape[0] != self.regular.m:
            raise DataError(f"X_star has {Xs.shape[0]} rows, regular data {self.regular.m}")
        if not np.all(np.isfinite(Xs)):
            r, c = np.argwhere(~np.isfinite(Xs))[0]
            raise DataError(f"non-finite privileged value at row {r}, column {c}")
        Xs.setflags(write=False)
        object.__setattr__(self, "X_star", Xs)
        if self.priv_names is not None:
            object.__setattr__(self, "priv_names", tuple(str(s) for s in self.priv_names))

    X = property(lambda self: self.regular.X)
    y = property(lambda self: self.regular.y)
    l = property(lambda self: self.regular.l)
    m = property(lambda self: self.regular.m)
    n = property(lambda self: self.regular.n)

    @property
    def n_star(self) -> int:
        return self.X_star.shape[1]

    def names(self) -> list[str]:
        return self.regular.names()

    def star_names(self) -> list[str]:
        return list(self.priv_names) if self.priv_names else [f"p{j}" for j in range(self.n_star)]

    def subset(self, rows) -> "LupiDataset":
        return LupiDataset(self.regular.subset(rows), self.X_star[rows], self.priv_names)


@dataclass(frozen=True)
class GroundTruth:
    regular: tuple[Relevance, ...]
    privileged: tuple[Relevance, ...] = ()

    def relevant(self, block: str = "regular") -> set[int]:
        tags = self.regular if block == "regular" else self.privileged
        return {j for j, t in enumerate(tags) if t.relevant}

    def to_json(self) -> dict:
        return {"regular": [t.value for t in self.regular],
                "privileged": [t.value for t in self.privileged]}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(tuple(Relevance(t) for t in obj["regular"]),
                   tuple(Relevance(t) for t in obj.get("privileged", ())))


# ---------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, names: Sequence[str] | None = None) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)  # population convention (ddof=0)
        flat = np.flatnonzero(scale <= 1e-12 * np.maximum(1.0, np.abs(mean)))
        if flat.size:
            j = int(flat[0])
            label = names[j] if names is not None else f"column {j}"
            raise DataError(f"feature {label} has zero variance")
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


def standardize(data: Dataset) -> tuple[Dataset, Standardizer]:
    """Zero mean / unit population variance per column."""
    st = Standardizer.fit(data.X, data.names())
    return data.with_X(st.transform(data.X)), st


def standardize_lupi(data: LupiDataset) -> tuple[LupiDataset, Standardizer, Standardizer | None]:
    reg, st = standardize(data.regular)
    Xs = np.asarray(data.X_star)
    # all-zero privileged columns carry no information but are allowed to stay
    live = Xs.std(axis=0) > 1e-12
    mean = np.where(live, Xs.mean(axis=0), 0.0)
    scale = np.where(live, Xs.std(axis=0), 1.0)
    st_star = Standardizer(mean, scale)
    return LupiDataset(reg, st_star.transform(Xs), data.priv_names), st, st_star


def equal_frequency_binning(y_cont: Sequence[float], l: int) -> np.ndarray:
    """Ordinal labels ``1..l`` with bin sizes differing by at most one.

    Ties are broken by a stable sort on value then original index.
    """
    y_cont = np.asarray(y_cont, dtype=float).ravel()
    m = y_cont.size
    if l < 2:
        raise DataError("need at least two bins")
    if l > m:
        raise DataError(f"cannot fill {l} bins with {m} samples")
    order = np.argsort(y_cont, kind="stable")
    labels = np.empty(m, dtype=int)
    # ranks r -> bin floor(r * l / m) + 1 gives sizes differing by <= 1
    labels[order] = (np.arange(m) * l) // m + 1
    return labels


# ---------------------------------------------------------------------------
# metrics


def mmae(y_true, y_pred, l: int) -> float:
    """Macro-averaged mean absolute error over the ``l`` true bins."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise DataError("label vectors differ in length")
    if y_true.size and (y_true.min() < 1 or y_true.max() > l or y_pred.min() < 1 or y_pred.max() > l):
        raise DataError(f"labels must lie in 1..{l}")
    counts = np.bincount(y_true, minlength=l + 1)[1:]
    if np.any(counts == 0):
        raise DataError(f"true bin(s) {[j + 1 for j in np.flatnonzero(counts == 0)]} empty")
    err = np.bincount(y_true, weights=np.abs(y_true - y_pred), minlength=l + 1)[1:]
    # plain left-to-right sum so the value does not depend on numpy's summation order
    total = 0.0
    for e, c in zip(err.tolist(), counts.tolist()):
        total += e / c
    return total / l


def selection_scores(predicted: Iterable[int], truth: GroundTruth | set, block: str = "regular"
                     ) -> tuple[float, float, float]:
    """(F1, precision, recall) of a predicted relevant-feature set.

    Predicting nothing when nothing is relevant scores 1 on all three.
    """
    pred = set(predicted)
    rel = truth.relevant(block) if isinstance(truth, GroundTruth) else set(truth)
    if not pred and not rel:
        return 1.0, 1.0, 1.0
    tp = len(pred & rel)
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(rel) if rel else 0.0
    if precision + recall == 0:
        return 0.0, precision, recall
    return 2 * precision * recall / (precision + recall), precision, recall


# ---------------------------------------------------------------------------
# CSV


def _resolve(col, header: list[str]) -> int:
    if isinstance(col, int) or (isinstance(col, str) and col.isdigit()):
        k = int(col)
        if not 0 <= k < len(header):
            raise DataError(f"column index {k} out of range (0..{len(header) - 1})")
        return k
    if col not in header:
        raise DataError(f"missing column {col!r}; available: {header}")
    return header.index(col)


def load_csv(path: str | Path, label_column, privileged_columns: Sequence | None = None
             ) -> Dataset | LupiDataset:
    """Read a numeric CSV with a header row.

    Labels are remapped to contiguous ``1..l`` preserving their order.
    Columns may be given by header name or 0-based index.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} cells, header has {len(header)}")
        for k, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {header[k]!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: non-finite cell {cell!r} at row {i + 1}, column {header[k]!r}")
            values[i, k] = v
    ycol = _resolve(label_column, header)
    pcols = [_resolve(c, header) for c in (privileged_columns or ())]
    if ycol in pcols:
        raise DataError("label column cannot be privileged")
    raw = values[:, ycol]
    levels = np.unique(raw)
    if levels.size < 2:
        raise DataError(f"{path}: label column has a single class")
    y = np.searchsorted(levels, raw) + 1
    fcols = [k for k in range(len(header)) if k != ycol and k not in pcols]
    reg = Dataset(values[:, fcols], y, int(levels.size), tuple(header[k] for k in fcols))
    if not pcols:
        return reg
    return LupiDataset(reg, values[:, pcols], tuple(header[k] for k in pcols))


def write_csv(path: str | Path, data: Dataset | LupiDataset, label_column: str = "y") -> Path:
    path = Path(path)
    reg = data.regular if isinstance(data, LupiDataset) else data
    header = reg.names()
    cols = [reg.X]
    if isinstance(data, LupiDataset):
        header = header + data.star_names()
        cols.append(data.X_star)
    header.append(label_column)
    cols.append(reg.y[:, None].astype(float))
    table = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, label in zip(table, reg.y):
            w.writerow([repr(float(v)) for v in row[:-1]] + [int(label)])
    return path

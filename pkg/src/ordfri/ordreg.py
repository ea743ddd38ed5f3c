"""L1-regularised large-margin ordinal regression (explicit and implicit order).

Both variants are linear programs over ``(w, w_abs, b, chi, xi)``.  Every
slack belongs to a *margin pair* ``(sample i, threshold t)``:

* a ``chi`` pair asks ``w.x_i - b_t <= -1 + chi``  (sample below threshold t)
* a ``xi`` pair asks  ``w.x_i - b_t >= +1 - xi``   (sample above threshold t)

Explicit order constrains each sample only against the thresholds bordering
its own bin and adds ``b_t <= b_{t+1}``.  Implicit order constrains every
sample against every threshold.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import lp
from .data import DataError, Dataset, mmae
from .pool import pmap


class Variant(str, enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


DEFAULT_C_GRID = tuple(2.0 ** k for k in range(-6, 7))


@dataclass(frozen=True)
class HyperParams:
    C: float = 1.0
    variant: Variant = Variant.EXPLICIT

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass(frozen=True)
class MarginPairs:
    """Sample/threshold index pairs for the chi (below) and xi (above) slacks."""

    chi: np.ndarray  # (k, 2) int: sample, threshold (0-based)
    xi: np.ndarray

    @classmethod
    def build(cls, y: np.ndarray, l: int, variant: Variant) -> "MarginPairs":
        y = np.asarray(y)
        idx = np.arange(y.size)
        if Variant(variant) is Variant.EXPLICIT:
            below = y < l
            above = y > 1
            chi = np.column_stack([idx[below], y[below] - 1])
            xi = np.column_stack([idx[above], y[above] - 2])
        else:
            chi_parts, xi_parts = [], []
            for t in range(l - 1):
                below = y <= t + 1
                chi_parts.append(np.column_stack([idx[below], np.full(below.sum(), t)]))
                xi_parts.append(np.column_stack([idx[~below], np.full((~below).sum(), t)]))
            chi = np.vstack(chi_parts)
            xi = np.vstack(xi_parts)
        return cls(chi.astype(int).reshape(-1, 2), xi.astype(int).reshape(-1, 2))


def margin_rows(X: np.ndarray, pairs: np.ndarray, n_thresholds: int, side: float):
    """Coefficient blocks of ``side * (w.x_i - b_t)`` for each pair."""
    k = pairs.shape[0]
    Xw = side * X[pairs[:, 0]]
    Bt = sp.csr_matrix((np.full(k, -side), (np.arange(k), pairs[:, 1])), shape=(k, n_thresholds))
    return Xw, Bt


def add_abs_rows(builder: lp.LpBuilder, value: str, absval: str) -> None:
    """``v <= v_abs`` and ``-v <= v_abs``."""
    n = builder.size(value)
    if n == 0:
        return
    eye = sp.identity(n, format="csr")
    builder.add_rows({value: eye, absval: -eye}, lp.LE, 0.0)
    builder.add_rows({value: -eye, absval: -eye}, lp.LE, 0.0)


def add_order_rows(builder: lp.LpBuilder, n_thresholds: int) -> None:
    """``b_t - b_{t+1} <= 0``."""
    if n_thresholds < 2:
        return
    D = sp.diags([np.ones(n_thresholds - 1), -np.ones(n_thresholds - 1)], [0, 1],
                 shape=(n_thresholds - 1, n_thresholds))
    builder.add_rows({"b": D}, lp.LE, 0.0)


def ordinal_builder(data: Dataset, variant: Variant, extra_blocks=()) -> tuple[lp.LpBuilder, MarginPairs]:
    """Builder holding the margin, order and absolute-value rows of a variant."""
    variant = Variant(variant)
    pairs = MarginPairs.build(data.y, data.l, variant)
    nt = data.l - 1
    builder = lp.LpBuilder([
        lp.Block("w", data.n),
        lp.Block("w_abs", data.n, 0.0),
        lp.Block("b", nt),
        lp.Block("chi", len(pairs.chi), 0.0),
        lp.Block("xi", len(pairs.xi), 0.0),
        *extra_blocks,
    ])
    for name, P, side in (("chi", pairs.chi, 1.0), ("xi", pairs.xi, -1.0)):
        if len(P) == 0:
            continue
        Xw, Bt = margin_rows(data.X, P, nt, side)
        builder.add_rows({"w": Xw, "b": Bt, name: -sp.identity(len(P), format="csr")}, lp.LE, -1.0)
    if variant is Variant.EXPLICIT:
        add_order_rows(builder, nt)
    add_abs_rows(builder, "w", "w_abs")
    return builder, pairs


@dataclass(frozen=True, eq=False)
class ModelSolution:
    variant: Variant
    C: float
    w: np.ndarray
    b: np.ndarray
    chi: np.ndarray
    xi: np.ndarray
    mu_X: float
    standardizer: dict | None = field(default=None, compare=False)

    @property
    def w_l1(self) -> float:
        return float(np.abs(self.w).sum())

    @property
    def slack_sum(self) -> float:
        return float(self.chi.sum() + self.xi.sum())

    @property
    def l(self) -> int:
        return self.b.size + 1

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def to_json(self) -> dict:
        return {"variant": self.variant.value, "C": self.C, "w": self.w.tolist(), "b": self.b.tolist(),
                "mu_X": self.mu_X, "w_l1": self.w_l1, "slack_sum": self.slack_sum,
                "standardization": self.standardizer}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSolution":
        # slack vectors are not serialised; keep their total for the split budget
        total = np.array([obj.get("slack_sum", 0.0)])
        return cls(Variant(obj["variant"]), float(obj["C"]), np.asarray(obj["w"], float),
                   np.asarray(obj["b"], float), total, np.zeros(0), float(obj["mu_X"]),
                   obj.get("standardization"))


def _fit(data: Dataset, C: float, variant: Variant, tolerances=lp.DEFAULT_TOLERANCES) -> ModelSolution:
    params = HyperParams(C, variant)
    builder, _ = ordinal_builder(data, params.variant)
    objective = {"w_abs": 0.5, "chi": params.C, "xi": params.C}
    sol = lp.solve(builder.build(objective), tolerances)
    if not sol.ok:
        raise lp.LpError(f"{params.variant.value} ordinal regression fit: {sol.status.value} {sol.message}",
                         sol.status)
    x = sol.point
    ix = builder.index
    w = x[ix["w"]].copy()
    chi = np.maximum(x[ix["chi"]], 0.0)
    xi = np.maximum(x[ix["xi"]], 0.0)
    return ModelSolution(params.variant, params.C, w, x[ix["b"]].copy(), chi, xi, sol.objective_value)


def fit_explicit(data: Dataset, C: float = 1.0) -> ModelSolution:
    return _fit(data, C, Variant.EXPLICIT)


def fit_implicit(data: Dataset, C: float = 1.0) -> ModelSolution:
    return _fit(data, C, Variant.IMPLICIT)


def fit(data: Dataset, C: float = 1.0, variant: Variant | str = Variant.EXPLICIT) -> ModelSolution:
    return _fit(data, C, Variant(variant))


def predict(model, X) -> np.ndarray | int:
    """Smallest bin ``j`` with ``w.x < b_j``, else ``l``.

    Accepts anything with ``w`` and ``b`` attributes.  A single vector gives a
    single label; a matrix gives one label per row.
    """
    w = np.asarray(model.w, dtype=float)
    b = np.asarray(model.b, dtype=float)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != w.size:
        raise ValueError(f"expected {w.size} features, got {X2.shape[1]}")
    proj = X2 @ w
    below = proj[:, None] < b[None, :]
    labels = np.where(below.any(axis=1), below.argmax(axis=1) + 1, b.size + 1)
    return int(labels[0]) if single else labels


# ---------------------------------------------------------------------------
# cross-validation


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per sample: seeded shuffle inside each bin, then round robin."""
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    offset = 0
    for label in np.unique(y):
        members = np.flatnonzero(y == label)
        rng.shuffle(members)
        folds[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    return folds


def _macro_mae(y_true, y_pred) -> float:
    labels = np.unique(y_true)
    return float(np.mean([np.abs(y_pred[y_true == j] - j).mean() for j in labels]))


def _cv_task(args):
    data, variant, C, train, test = args
    before = lp.solve_count()
    model = _fit(data.subset(train), C, variant)
    return _macro_mae(data.y[test], predict(model, data.X[test])), lp.solve_count() - before


@dataclass(frozen=True)
class CvResult:
    best_C: float
    mean_mmae: dict[float, float]
    lp_count: int = 0


def cross_validate(data: Dataset, variant: Variant | str = Variant.EXPLICIT, C_grid=DEFAULT_C_GRID,
                   k_folds: int = 5, seed: int = 0, workers: int = 1) -> CvResult:
    """Pick C by stratified k-fold MMAE; ties go to the smaller C.

    Folds whose training part misses a bin are re-drawn with a derived seed,
    up to ten attempts.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    grid = sorted(float(c) for c in C_grid)
    if not grid:
        raise ValueError("empty C grid")
    if len(grid) == 1:
        return CvResult(grid[0], {grid[0]: math.nan})
    splits = make_splits(data.y, data.l, k_folds, seed)
    tasks = [(data, Variant(variant), C, tr, te) for C in grid for tr, te in splits]
    results = pmap(_cv_task, tasks, workers)
    scores = [r[0] for r in results]
    per_c = {C: float(np.mean(scores[i * k_folds:(i + 1) * k_folds])) for i, C in enumerate(grid)}
    best = min(grid, key=lambda c: (round(per_c[c], 12), c))
    return CvResult(best, per_c, sum(r[1] for r in results))


def make_splits(y: np.ndarray, l: int, k_folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    for attempt in range(10):
        folds = stratified_folds(y, k_folds, seed + 7919 * attempt)
        splits = [(np.flatnonzero(folds != f), np.flatnonzero(folds == f)) for f in range(k_folds)]
        if all(np.unique(y[tr]).size == l and te.size for tr, te in splits):
            return splits
    raise DataError(f"could not draw {k_folds} folds keeping every bin in training after 10 attempts")

"""Relevance intervals over the class of equivalently good ordinal models.

For feature ``j`` the interval ``[minrel, maxrel]`` is the smallest and the
largest ``|w_j|`` among all models whose constraints hold and whose cost stays
within ``(1 + delta)`` of the optimum.  ``|w_j|`` is carried by the auxiliary
column ``w_abs_j >= |w_j|``; the minimum is one LP, the maximum the better of
two sign-restricted LPs (``w_abs_j <= w_j`` and ``w_abs_j <= -w_j``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import lp
from .data import Dataset
from .ordreg import ModelSolution, Variant, fit, ordinal_builder
from .pool import pmap

DEFAULT_DELTA = 0.001


class ConstraintMode(str, enum.Enum):
    COMBINED = "combined"
    SPLIT = "split"


@dataclass(frozen=True)
class RelevanceParams:
    delta: float = DEFAULT_DELTA
    C: float = 1.0
    constraint_mode: ConstraintMode = ConstraintMode.SPLIT
    variant: Variant = Variant.EXPLICIT

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        object.__setattr__(self, "constraint_mode", ConstraintMode(self.constraint_mode))
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass(frozen=True)
class RelevanceInterval:
    feature: int
    lower: float
    upper: float
    baseline_weight: float = 0.0
    normalized: bool = False
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def scaled(self, factor: float) -> "RelevanceInterval":
        return replace(self, lower=self.lower * factor, upper=self.upper * factor,
                       baseline_weight=self.baseline_weight * factor, normalized=True)


@dataclass(frozen=True, eq=False)
class BoundFamily:
    """Shared constraint set of all bound LPs for one dataset and baseline."""

    base: lp.LpProblem
    index: dict

    def column(self, block: str, k: int) -> int:
        s = self.index[block]
        if not 0 <= k < s.stop - s.start:
            raise IndexError(f"{block}[{k}] out of range")
        return s.start + k

    def minimize(self, col: int, tolerances=lp.DEFAULT_TOLERANCES) -> lp.LpSolution:
        c = np.zeros(self.base.n_vars)
        c[col] = 1.0
        return lp.solve(_with(self.base, c), tolerances)

    def maximize_signed(self, col: int, abs_col: int, sign: float,
                        tolerances=lp.DEFAULT_TOLERANCES) -> lp.LpSolution:
        """max ``v_abs`` subject to ``v_abs <= sign * v``."""
        c = np.zeros(self.base.n_vars)
        c[abs_col] = -1.0
        row = np.zeros(self.base.n_vars)
        row[abs_col] = 1.0
        row[col] = -sign
        return lp.solve(_with(self.base, c, row, lp.LE, 0.0), tolerances)


def _with(base: lp.LpProblem, objective, row=None, sense=None, rhs=None) -> lp.LpProblem:
    if row is None:
        return lp.LpProblem(objective, base.A, base.senses, base.rhs, base.bounds, base.names)
    A = sp.vstack([base.A, sp.csr_matrix(row)], format="csr")
    return lp.LpProblem(objective, A, base.senses + (sense,), np.append(base.rhs, rhs),
                        base.bounds, base.names)


def bound_family(data: Dataset, baseline: ModelSolution, params: RelevanceParams) -> BoundFamily:
    """Ordinal constraints of ``params.variant`` plus the cost budget."""
    if baseline.variant is not params.variant:
        raise ValueError(f"baseline is {baseline.variant.value}, params ask for {params.variant.value}")
    builder, _ = ordinal_builder(data, params.variant)
    n = data.n
    n_chi, n_xi = builder.size("chi"), builder.size("xi")
    scale = 1.0 + params.delta
    if params.constraint_mode is ConstraintMode.COMBINED:
        builder.add_rows({"w_abs": np.full((1, n), 0.5), "chi": np.full((1, n_chi), params.C),
                          "xi": np.full((1, n_xi), params.C)}, lp.LE, scale * baseline.mu_X)
    else:
        builder.add_rows({"w_abs": np.full((1, n), 0.5)}, lp.LE, scale * baseline.w_l1)
        builder.add_rows({"chi": np.ones((1, n_chi)), "xi": np.ones((1, n_xi))}, lp.LE,
                         baseline.slack_sum)
    return BoundFamily(builder.build(), dict(builder.index))


def _check(sol: lp.LpSolution, what: str) -> float:
    if not sol.ok:
        raise lp.LpError(f"{what}: {sol.status.value} {sol.message}".strip(), sol.status)
    return float(sol.objective_value)


def _min_abs(family: BoundFamily, block: str, abs_block: str, j: int, what: str) -> float:
    return max(0.0, _check(family.minimize(family.column(abs_block, j)), what))


def _max_abs(family: BoundFamily, block: str, abs_block: str, j: int, what: str,
             signs=(1.0, -1.0)) -> float:
    col, abs_col = family.column(block, j), family.column(abs_block, j)
    best = -math.inf
    statuses = []
    for sign in signs:
        sol = family.maximize_signed(col, abs_col, sign)
        statuses.append(sol.status.value)
        if sol.ok:
            best = max(best, -sol.objective_value)
        elif sol.status is not lp.Status.INFEASIBLE:
            raise lp.LpError(f"{what}: {sol.status.value} {sol.message}".strip(), sol.status)
    if best == -math.inf:
        raise lp.LpError(f"{what}: every sign-restricted LP failed ({', '.join(statuses)})",
                         lp.Status.INFEASIBLE)
    return max(0.0, best)


def min_relevance(data: Dataset, baseline: ModelSolution, j: int, params: RelevanceParams,
                  family: BoundFamily | None = None) -> float:
    family = family or bound_family(data, baseline, params)
    return _min_abs(family, "w", "w_abs", j, f"minrel(feature {j})")


def max_relevance(data: Dataset, baseline: ModelSolution, j: int, params: RelevanceParams,
                  family: BoundFamily | None = None) -> float:
    family = family or bound_family(data, baseline, params)
    return _max_abs(family, "w", "w_abs", j, f"maxrel(feature {j})")


def implicit_relevance_bounds(data: Dataset, baseline: ModelSolution, j: int,
                              params: RelevanceParams) -> tuple[float, float]:
    """(minrel, maxrel) of feature ``j`` under implicit order constraints."""
    if params.variant is not Variant.IMPLICIT:
        params = replace(params, variant=Variant.IMPLICIT)
    family = bound_family(data, baseline, params)
    return (min_relevance(data, baseline, j, params, family),
            max_relevance(data, baseline, j, params, family))


def feature_bounds(data: Dataset, baseline: ModelSolution, j: int, params: RelevanceParams,
                   family: BoundFamily | None = None) -> RelevanceInterval:
    family = family or bound_family(data, baseline, params)
    w_j = abs(float(baseline.w[j]))
    try:
        lo = min_relevance(data, baseline, j, params, family)
        hi = max_relevance(data, baseline, j, params, family)
    except lp.LpError as exc:
        return RelevanceInterval(j, math.nan, math.nan, w_j, error=str(exc))
    return RelevanceInterval(j, lo, hi, w_j)


@dataclass
class Profile:
    baseline: ModelSolution
    intervals: list[RelevanceInterval]
    params: RelevanceParams
    lp_count: int = 0
    normalized: bool = False

    @property
    def failures(self) -> list[RelevanceInterval]:
        return [iv for iv in self.intervals if iv.failed]

    @property
    def lower(self) -> np.ndarray:
        return np.array([iv.lower for iv in self.intervals])

    @property
    def upper(self) -> np.ndarray:
        return np.array([iv.upper for iv in self.intervals])


def _profile_task(args):
    data, baseline, params, features = args
    before = lp.solve_count()
    family = bound_family(data, baseline, params)
    out = [feature_bounds(data, baseline, j, params, family) for j in features]
    return out, lp.solve_count() - before


def _chunks(n: int, workers: int) -> list[list[int]]:
    if workers <= 1:
        return [list(range(n))]
    return [list(range(n))[k::workers] for k in range(min(workers, n))]


def relevance_profile(data: Dataset, params: RelevanceParams = RelevanceParams(), workers: int = 1,
                      normalize: bool = False, baseline: ModelSolution | None = None) -> Profile:
    """Fit the baseline once and bound every feature (three LPs each).

    Failed features come back with ``error`` set and NaN bounds; the rest of
    the profile is still returned.
    """
    before = lp.solve_count()
    if baseline is None:
        baseline = fit(data, params.C, params.variant)
    count = lp.solve_count() - before
    tasks = [(data, baseline, params, chunk) for chunk in _chunks(data.n, workers)]
    results = pmap(_profile_task, tasks, workers)
    intervals: list[RelevanceInterval | None] = [None] * data.n
    for chunk_result, n_solved in results:
        count += n_solved
        for iv in chunk_result:
            intervals[iv.feature] = iv
    if normalize:
        norm = baseline.w_l1
        factor = 1.0 / norm if norm > 0 else 0.0
        intervals = [iv.scaled(factor) for iv in intervals]
    return Profile(baseline, intervals, params, count, normalize)

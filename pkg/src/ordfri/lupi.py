"""Ordinal regression with privileged information and its relevance bounds.

Slacks of the explicit-order model are replaced by linear functions of the
privileged features, one per slack side::

    chi(i, t) = w*_chi . x*_i + d_chi[t]     (sample i below threshold t)
    xi(i, t)  = w*_xi  . x*_i + d_xi[t]      (sample i above threshold t)

each constrained to be non-negative on every training sample.  The cost is
``0.5 |w|_1 + gamma/2 (|w*_chi|_1 + |w*_xi|_1) + C * (sum of slack values)``.
Privileged features are never used for prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import lp
from .data import LupiDataset
from .ordreg import MarginPairs, Variant, add_abs_rows, add_order_rows, margin_rows, predict
from .pool import pmap
from .relevance import BoundFamily, RelevanceInterval, _max_abs, _min_abs, _chunks
from .thresholding import NoisePopulations, collect_populations

DEFAULT_GAMMA = 1.0
DEFAULT_GAMMA_GRID = tuple(2.0 ** k for k in range(-4, 5))
SIDES = ("chi", "xi")


@dataclass(frozen=True)
class LupiHyperParams:
    C: float = 1.0
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class LupiModelSolution:
    C: float
    gamma: float
    w: np.ndarray
    b: np.ndarray
    w_star_chi: np.ndarray
    w_star_xi: np.ndarray
    d_chi: np.ndarray
    d_xi: np.ndarray
    mu_X: float
    loss: float

    variant = Variant.EXPLICIT

    @property
    def w_l1(self) -> float:
        return float(np.abs(self.w).sum())

    @property
    def w_star_l1(self) -> float:
        return float(np.abs(self.w_star_chi).sum() + np.abs(self.w_star_xi).sum())

    def slack_values(self, data: LupiDataset) -> tuple[np.ndarray, np.ndarray]:
        """Evaluated chi and xi slack functions on the training margin pairs."""
        pairs = MarginPairs.build(data.y, data.l, Variant.EXPLICIT)
        chi = data.X_star[pairs.chi[:, 0]] @ self.w_star_chi + self.d_chi[pairs.chi[:, 1]]
        xi = data.X_star[pairs.xi[:, 0]] @ self.w_star_xi + self.d_xi[pairs.xi[:, 1]]
        return chi, xi

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def to_json(self) -> dict:
        return {"variant": "explicit-lupi", "C": self.C, "gamma": self.gamma, "w": self.w.tolist(),
                "b": self.b.tolist(), "w_star_chi": self.w_star_chi.tolist(),
                "w_star_xi": self.w_star_xi.tolist(), "d_chi": self.d_chi.tolist(),
                "d_xi": self.d_xi.tolist(), "mu_X": self.mu_X, "loss": self.loss, "w_l1": self.w_l1}


def lupi_builder(data: LupiDataset) -> tuple[lp.LpBuilder, np.ndarray]:
    """Builder with all constraints of the privileged-slack model.

    Returns the builder and the slack-loss coefficient vector over its columns.
    """
    pairs = MarginPairs.build(data.y, data.l, Variant.EXPLICIT)
    nt, ns = data.l - 1, data.n_star
    builder = lp.LpBuilder([
        lp.Block("w", data.n),
        lp.Block("w_abs", data.n, 0.0),
        lp.Block("b", nt),
        lp.Block("wstar_chi", ns),
        lp.Block("wstar_chi_abs", ns, 0.0),
        lp.Block("wstar_xi", ns),
        lp.Block("wstar_xi_abs", ns, 0.0),
        lp.Block("d_chi", nt),
        lp.Block("d_xi", nt),
    ])
    loss = np.zeros(builder.n_vars)
    for side, P, sign in (("chi", pairs.chi, 1.0), ("xi", pairs.xi, -1.0)):
        if len(P) == 0:
            continue
        k = len(P)
        Xs = data.X_star[P[:, 0]]
        D = sp.csr_matrix((np.ones(k), (np.arange(k), P[:, 1])), shape=(k, nt))
        Xw, Bt = margin_rows(data.X, P, nt, sign)
        # sign*(w.x - b_t) <= -1 + slack(i, t)
        builder.add_rows({"w": Xw, "b": Bt, f"wstar_{side}": -Xs, f"d_{side}": -D}, lp.LE, -1.0)
        # slack(i, t) >= 0
        builder.add_rows({f"wstar_{side}": -Xs, f"d_{side}": -D}, lp.LE, 0.0)
        loss[builder.index[f"wstar_{side}"]] = Xs.sum(axis=0)
        loss[builder.index[f"d_{side}"]] = np.asarray(D.sum(axis=0)).ravel()
    add_order_rows(builder, nt)
    for block in ("w", "wstar_chi", "wstar_xi"):
        add_abs_rows(builder, block, block + "_abs" if block != "w" else "w_abs")
    return builder, loss


def _objective(builder: lp.LpBuilder, loss: np.ndarray, params: LupiHyperParams) -> np.ndarray:
    c = params.C * loss
    c[builder.index["w_abs"]] += 0.5
    c[builder.index["wstar_chi_abs"]] += params.gamma / 2
    c[builder.index["wstar_xi_abs"]] += params.gamma / 2
    return c


def fit_lupi(data: LupiDataset, params: LupiHyperParams = LupiHyperParams()) -> LupiModelSolution:
    builder, loss = lupi_builder(data)
    sol = lp.solve(builder.build(_objective(builder, loss, params)))
    if not sol.ok:
        raise lp.LpError(f"privileged ordinal regression fit: {sol.status.value} {sol.message}", sol.status)
    x, ix = sol.point, builder.index
    return LupiModelSolution(params.C, params.gamma, x[ix["w"]].copy(), x[ix["b"]].copy(),
                             x[ix["wstar_chi"]].copy(), x[ix["wstar_xi"]].copy(),
                             x[ix["d_chi"]].copy(), x[ix["d_xi"]].copy(),
                             sol.objective_value, float(loss @ x))


def lupi_family(data: LupiDataset, baseline: LupiModelSolution, delta: float) -> BoundFamily:
    """Model constraints plus ``cost <= (1 + delta) * mu_X``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    builder, loss = lupi_builder(data)
    c = _objective(builder, loss, LupiHyperParams(baseline.C, baseline.gamma))
    builder.add_rows({name: c[s][None, :] for name, s in builder.index.items() if s.stop > s.start},
                     lp.LE, (1.0 + delta) * baseline.mu_X)
    return BoundFamily(builder.build(), dict(builder.index))


def minrel_privileged(data: LupiDataset, baseline: LupiModelSolution, p: int, delta: float,
                      family: BoundFamily | None = None) -> float:
    """max over slack sides of min ``|w*_side[p]|`` (two LPs)."""
    family = family or lupi_family(data, baseline, delta)
    return max(_min_abs(family, f"wstar_{s}", f"wstar_{s}_abs", p, f"minrel(privileged {p}, {s})")
               for s in SIDES)


def maxrel_privileged(data: LupiDataset, baseline: LupiModelSolution, p: int, delta: float,
                      family: BoundFamily | None = None) -> float:
    """max over slack sides and signs of ``|w*_side[p]|`` (four LPs)."""
    family = family or lupi_family(data, baseline, delta)
    best, errors = -math.inf, []
    for s in SIDES:
        try:
            best = max(best, _max_abs(family, f"wstar_{s}", f"wstar_{s}_abs", p,
                                      f"maxrel(privileged {p}, {s})"))
        except lp.LpError as exc:
            if exc.status is not lp.Status.INFEASIBLE:
                raise
            errors.append(str(exc))
    if best == -math.inf:
        raise lp.LpError("; ".join(errors), lp.Status.INFEASIBLE)
    return best


def _regular_bounds(data, baseline, j, family) -> RelevanceInterval:
    w_j = abs(float(baseline.w[j]))
    try:
        lo = _min_abs(family, "w", "w_abs", j, f"minrel(feature {j})")
        hi = _max_abs(family, "w", "w_abs", j, f"maxrel(feature {j})")
    except lp.LpError as exc:
        return RelevanceInterval(j, math.nan, math.nan, w_j, error=str(exc))
    return RelevanceInterval(j, lo, hi, w_j)


def _privileged_bounds(data, baseline, p, delta, family) -> RelevanceInterval:
    w_p = max(abs(float(baseline.w_star_chi[p])), abs(float(baseline.w_star_xi[p])))
    try:
        lo = minrel_privileged(data, baseline, p, delta, family)
        hi = maxrel_privileged(data, baseline, p, delta, family)
    except lp.LpError as exc:
        return RelevanceInterval(p, math.nan, math.nan, w_p, error=str(exc))
    return RelevanceInterval(p, lo, hi, w_p)


@dataclass
class LupiProfile:
    baseline: LupiModelSolution
    regular: list[RelevanceInterval]
    privileged: list[RelevanceInterval]
    delta: float
    lp_count: int = 0
    normalized: bool = False

    @property
    def failures(self) -> list[RelevanceInterval]:
        return [iv for iv in self.regular + self.privileged if iv.failed]


def _lupi_task(args):
    data, baseline, delta, jobs = args
    before = lp.solve_count()
    family = lupi_family(data, baseline, delta)
    out = []
    for block, k in jobs:
        if block == "regular":
            out.append((block, _regular_bounds(data, baseline, k, family)))
        else:
            out.append((block, _privileged_bounds(data, baseline, k, delta, family)))
    return out, lp.solve_count() - before


def relevance_profile_lupi(data: LupiDataset, params: LupiHyperParams = LupiHyperParams(),
                           delta: float = 0.001, workers: int = 1, normalize: bool = False,
                           baseline: LupiModelSolution | None = None) -> LupiProfile:
    """Bounds for every regular (3 LPs) and privileged (6 LPs) feature."""
    before = lp.solve_count()
    if baseline is None:
        baseline = fit_lupi(data, params)
    count = lp.solve_count() - before
    jobs = [("regular", j) for j in range(data.n)] + [("privileged", p) for p in range(data.n_star)]
    tasks = [(data, baseline, delta, [jobs[k] for k in chunk])
             for chunk in _chunks(len(jobs), workers)]
    regular: list = [None] * data.n
    privileged: list = [None] * data.n_star
    for chunk_result, n_solved in pmap(_lupi_task, tasks, workers):
        count += n_solved
        for block, iv in chunk_result:
            (regular if block == "regular" else privileged)[iv.feature] = iv
    if normalize:
        norm = baseline.w_l1
        regular = [iv.scaled(1.0 / norm if norm > 0 else 0.0) for iv in regular]
        pnorm = baseline.w_star_l1
        privileged = [iv.scaled(1.0 / pnorm if pnorm > 0 else 0.0) for iv in privileged]
    return LupiProfile(baseline, regular, privileged, delta, count, normalize)


# ---------------------------------------------------------------------------
# permutation populations


def _permute(X: np.ndarray, col: int, seed: int) -> np.ndarray:
    X = np.array(X)
    X[:, col] = X[np.random.default_rng(seed).permutation(X.shape[0]), col]
    return X


def _lupi_draw(args):
    data, params, delta, block, seed = args
    rng = np.random.default_rng(seed)
    width = data.n if block == "regular" else data.n_star
    k = int(rng.integers(width))
    perm_seed = int(rng.integers(2 ** 63))
    if block == "regular":
        permuted = LupiDataset(data.regular.with_X(_permute(data.X, k, perm_seed)), data.X_star,
                               data.priv_names)
    else:
        permuted = LupiDataset(data.regular, _permute(data.X_star, k, perm_seed), data.priv_names)
    before = lp.solve_count()
    try:
        baseline = fit_lupi(permuted, params)
        family = lupi_family(permuted, baseline, delta)
        if block == "regular":
            lo = _min_abs(family, "w", "w_abs", k, "minrel")
            hi = _max_abs(family, "w", "w_abs", k, "maxrel")
        else:
            lo = minrel_privileged(permuted, baseline, k, delta, family)
            hi = maxrel_privileged(permuted, baseline, k, delta, family)
    except lp.LpError:
        return None, k, lp.solve_count() - before
    return (lo, hi), k, lp.solve_count() - before


def lupi_noise_populations(data: LupiDataset, params: LupiHyperParams = LupiHyperParams(),
                           delta: float = 0.001, n_perm: int = 50, seed: int = 0, workers: int = 1
                           ) -> tuple[NoisePopulations, NoisePopulations]:
    """Separate permutation populations for the regular and privileged blocks.

    Regular draws cost 1 + 3 LPs, privileged draws 1 + 6 LPs.
    """
    reg = collect_populations(_lupi_draw, (data, params, delta, "regular"), n_perm, seed, workers)
    priv = collect_populations(_lupi_draw, (data, params, delta, "privileged"), n_perm,
                               seed ^ 0x5EED, workers)
    return reg, priv


def cross_validate_lupi(data: LupiDataset, C_grid, gamma_grid=DEFAULT_GAMMA_GRID, k_folds: int = 5,
                        seed: int = 0, workers: int = 1) -> tuple[LupiHyperParams, dict, int]:
    """Joint (C, gamma) grid search by stratified k-fold MMAE.

    Ties go to the smaller C, then the larger gamma (the simpler model).
    Returns the chosen parameters, the mean MMAE per grid point and the
    number of LPs solved.
    """
    from .ordreg import make_splits

    splits = make_splits(data.y, data.l, k_folds, seed)
    grid = [(float(C), float(g)) for C in sorted(C_grid) for g in sorted(gamma_grid)]
    tasks = [(data, C, g, tr, te) for C, g in grid for tr, te in splits]
    results = pmap(_lupi_cv_task, tasks, workers)
    scores = [r[0] for r in results]
    per = {cg: float(np.mean(scores[i * k_folds:(i + 1) * k_folds])) for i, cg in enumerate(grid)}
    best = min(grid, key=lambda cg: (round(per[cg], 12), cg[0], -cg[1]))
    return LupiHyperParams(*best), per, sum(r[1] for r in results)


def _lupi_cv_task(args):
    from .ordreg import _macro_mae

    data, C, gamma, train, test = args
    before = lp.solve_count()
    model = fit_lupi(data.subset(train), LupiHyperParams(C, gamma))
    return _macro_mae(data.y[test], predict(model, data.X[test])), lp.solve_count() - before

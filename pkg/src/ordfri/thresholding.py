"""Permutation-based relevance thresholds and the strong/weak/irrelevant rule.

Bounds of a randomly permuted column estimate how much relevance an
irrelevant feature picks up from model slack and solver noise.  A one-sided
normal-theory prediction interval over those samples gives the threshold a
feature's bound must exceed.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import lp
from .data import Dataset, Relevance
from .ordreg import fit
from .pool import pmap
from .relevance import RelevanceInterval, RelevanceParams, bound_family, max_relevance, min_relevance

DEFAULT_P = 0.999
DEFAULT_N_PERM = 50


# ---------------------------------------------------------------------------
# Student's t quantile


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction of the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta ``I_x(a, b)``."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    x = df / (df + t * t)
    tail = 0.5 * betainc_reg(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t with ``df`` degrees of freedom (|error| < 1e-10)."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# populations and intervals


@dataclass(frozen=True)
class NoisePopulations:
    minrel_samples: np.ndarray
    maxrel_samples: np.ndarray
    seed: int
    features: tuple[int, ...] = ()
    failures: int = 0
    lp_count: int = 0

    @property
    def n_perm(self) -> int:
        return len(self.minrel_samples)

    def to_json(self) -> dict:
        return {"n_perm": self.n_perm, "seed": self.seed, "features": list(self.features),
                "failures": self.failures, "lp_count": self.lp_count,
                "minrel": [float(v) for v in self.minrel_samples],
                "maxrel": [float(v) for v in self.maxrel_samples]}

    @classmethod
    def from_json(cls, obj: dict) -> "NoisePopulations":
        return cls(np.asarray(obj["minrel"], float), np.asarray(obj["maxrel"], float), obj["seed"],
                   tuple(obj.get("features", ())), obj.get("failures", 0), obj.get("lp_count", 0))


@dataclass(frozen=True)
class PredictionIntervals:
    upper_minrel: float
    upper_maxrel: float
    p: float = DEFAULT_P

    def to_json(self) -> dict:
        return {"upper_minrel": self.upper_minrel, "upper_maxrel": self.upper_maxrel, "p": self.p}


def draw_seed(master: int, index: int) -> int:
    """Schedule-independent per-draw seed."""
    digest = hashlib.sha256(f"{master}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def permute_feature(data: Dataset, j: int, seed: int) -> Dataset:
    """Copy of ``data`` with column ``j`` shuffled by a seeded permutation."""
    if not 0 <= j < data.n:
        raise IndexError(f"feature {j} out of range")
    X = np.array(data.X)
    X[:, j] = X[np.random.default_rng(seed).permutation(data.m), j]
    return data.with_X(X)


def _regular_draw(args):
    data, params, seed = args
    rng = np.random.default_rng(seed)
    j = int(rng.integers(data.n))
    permuted = permute_feature(data, j, int(rng.integers(2 ** 63)))
    before = lp.solve_count()
    try:
        baseline = fit(permuted, params.C, params.variant)
        family = bound_family(permuted, baseline, params)
        lo = min_relevance(permuted, baseline, j, params, family)
        hi = max_relevance(permuted, baseline, j, params, family)
    except lp.LpError:
        return None, j, lp.solve_count() - before
    return (lo, hi), j, lp.solve_count() - before


def collect_populations(draw: Callable, payload, n_perm: int, seed: int, workers: int = 1
                        ) -> NoisePopulations:
    """Run ``draw((*payload, seed_k))`` until ``n_perm`` draws succeed.

    Attempt ``k`` always uses ``draw_seed(seed, k)``, so the accepted set is
    independent of scheduling.  Gives up after ``3 * n_perm`` attempts.
    """
    if n_perm < 2:
        raise ValueError("need at least two permutation draws")
    results, feats, failures, count = [], [], 0, 0
    attempt = 0
    while len(results) < n_perm:
        need = n_perm - len(results)
        if attempt + need > 3 * n_perm:
            raise lp.LpError(f"only {len(results)} of {n_perm} permutation draws succeeded "
                             f"in {attempt} attempts")
        batch = pmap(draw, [(*payload, draw_seed(seed, attempt + k)) for k in range(need)], workers)
        attempt += need
        for value, j, n_lp in batch:
            count += n_lp
            if value is None:
                failures += 1
                continue
            results.append(value)
            feats.append(j)
    arr = np.asarray(results, dtype=float).reshape(-1, 2)
    return NoisePopulations(arr[:, 0], arr[:, 1], seed, tuple(feats), failures, count)


def noise_populations(data: Dataset, params: RelevanceParams = RelevanceParams(),
                      n_perm: int = DEFAULT_N_PERM, seed: int = 0, workers: int = 1) -> NoisePopulations:
    """minrel/maxrel of randomly chosen, randomly permuted columns.

    Each draw refits the baseline on the permuted data (1 LP) and bounds the
    permuted column (3 LPs).
    """
    return collect_populations(_regular_draw, (data, params), n_perm, seed, workers)


def prediction_interval(population: Sequence[float], p: float = DEFAULT_P) -> float:
    """Upper end of the normal-theory prediction interval, clamped at 0.

    ``mean + t_{(1+p)/2, n-1} * s * sqrt(1 + 1/n)`` with ``s`` the sample
    standard deviation.
    """
    pop = np.asarray(population, dtype=float)
    n = pop.size
    if n < 2:
        raise ValueError("population needs at least two values")
    if not 0.0 < p < 1.0:
        raise ValueError("coverage p must lie in (0, 1)")
    mean = float(pop.mean())
    s = float(pop.std(ddof=1))
    if s == 0.0:
        return max(0.0, mean)
    return max(0.0, mean + t_ppf((1.0 + p) / 2.0, n - 1) * s * math.sqrt(1.0 + 1.0 / n))


def prediction_intervals(pops: NoisePopulations, p: float = DEFAULT_P) -> PredictionIntervals:
    return PredictionIntervals(prediction_interval(pops.minrel_samples, p),
                               prediction_interval(pops.maxrel_samples, p), p)


def classify_one(lower: float, upper: float, pis: PredictionIntervals) -> Relevance:
    above_max = upper > pis.upper_maxrel
    above_min = lower > pis.upper_minrel
    if above_max and above_min:
        return Relevance.STRONG
    if above_max:
        return Relevance.WEAK
    if above_min:
        warnings.warn(f"lower bound {lower:.3g} exceeds its threshold while upper bound {upper:.3g} "
                      "does not; classified Weak", RuntimeWarning, stacklevel=3)
        return Relevance.WEAK
    return Relevance.IRRELEVANT


def classify(intervals: Sequence[RelevanceInterval], pis: PredictionIntervals) -> list[Relevance]:
    """Class per interval; failed intervals (NaN bounds) are Irrelevant."""
    out = []
    for iv in intervals:
        if iv.failed or math.isnan(iv.lower) or math.isnan(iv.upper):
            out.append(Relevance.IRRELEVANT)
        else:
            out.append(classify_one(iv.lower, iv.upper, pis))
    return out

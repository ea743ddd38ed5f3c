"""Synthetic ordinal-regression data with known relevance ground truth.

The continuous target is a linear score of *informative* variables, binned
into equal-frequency ordinal classes.  Strongly relevant columns are
informative variables observed directly.  Weakly relevant columns come in
groups that each encode one withheld informative variable through scaled
copies, so any member of a group can stand in for the others.  Irrelevant
columns are independent standard Gaussians.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import (DataError, Dataset, GroundTruth, LupiDataset, Relevance,
                   equal_frequency_binning, standardize)


class LupiMode(str, enum.Enum):
    NONE = "none"
    CLEAN = "clean"
    NOISE = "noise"


@dataclass(frozen=True)
class GenSpec:
    n_samples: int
    n_strong: int
    n_weak: int
    n_irrelevant: int
    n_bins: int = 5
    noise_sigma: float = 0.0
    seed: int = 0
    lupi_mode: LupiMode = LupiMode.NONE
    n_priv_irrelevant: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lupi_mode", LupiMode(self.lupi_mode))
        if min(self.n_strong, self.n_weak, self.n_irrelevant, self.n_priv_irrelevant) < 0:
            raise DataError("feature counts must be non-negative")
        if self.n_strong + self.n_weak < 1:
            raise DataError("need at least one strong or weak feature")
        if self.n_weak == 1:
            raise DataError("a single weak feature has no substitute; use n_weak = 0 or >= 2")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")
        if self.n_bins < 2 or self.n_samples < self.n_bins:
            raise DataError(f"cannot bin {self.n_samples} samples into {self.n_bins} classes")

    def to_json(self) -> dict:
        d = asdict(self)
        d["lupi_mode"] = self.lupi_mode.value
        return d


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one named sub-step of a seeded run."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])


def _weights(rng: np.random.Generator, k: int) -> np.ndarray:
    w = rng.uniform(-1.0, 1.0, size=k)
    while np.any(np.abs(w) < 0.1):
        bad = np.abs(w) < 0.1
        w[bad] = rng.uniform(-1.0, 1.0, size=bad.sum())
    return w


def _weak_groups(n_weak: int) -> list[int]:
    """Group sizes: pairs, with a trailing triple when ``n_weak`` is odd."""
    if n_weak == 0:
        return []
    sizes = [2] * (n_weak // 2)
    if n_weak % 2:
        sizes[-1] += 1
    return sizes


def _informative_block(spec: GenSpec, label: str, noise_sigma: float = 0.0):
    """Raw (unstandardised) relevant columns, their tags and the score.

    ``noise_sigma`` perturbs the informative variables after the score is
    taken, so weak copies of one variable share the same measurement.
    """
    m = spec.n_samples
    groups = _weak_groups(spec.n_weak)
    n_info = spec.n_strong + len(groups)
    Z = stream(spec.seed, label + "/informative").normal(size=(m, n_info))
    omega = _weights(stream(spec.seed, label + "/omega"), n_info)
    score = Z @ omega
    if noise_sigma > 0:
        Z = Z + stream(spec.seed, label + "/noise").normal(scale=noise_sigma, size=Z.shape)
    cols = [Z[:, :spec.n_strong]]
    tags = [Relevance.STRONG] * spec.n_strong
    coef_rng = stream(spec.seed, label + "/weak")
    for g, size in enumerate(groups):
        parent = Z[:, spec.n_strong + g]
        coef = coef_rng.uniform(0.5, 1.5, size=size)
        cols.append(parent[:, None] * coef[None, :])
        tags += [Relevance.WEAK] * size
    return np.hstack(cols), tags, score


def generate(spec: GenSpec) -> tuple[Dataset | LupiDataset, GroundTruth]:
    """Dataset for ``spec``; dispatches on ``spec.lupi_mode``."""
    if spec.lupi_mode is LupiMode.CLEAN:
        return generate_lupi_clean(spec)
    if spec.lupi_mode is LupiMode.NOISE:
        return generate_lupi_noise_priv(spec)
    return _generate_regular(spec)


def _generate_regular(spec: GenSpec) -> tuple[Dataset, GroundTruth]:
    relevant, tags, score = _informative_block(spec, "regular", spec.noise_sigma)
    y = equal_frequency_binning(score, spec.n_bins)
    irr = stream(spec.seed, "regular/irrelevant").normal(size=(spec.n_samples, spec.n_irrelevant))
    X = np.hstack([relevant, irr])
    tags = tags + [Relevance.IRRELEVANT] * spec.n_irrelevant
    data, _ = standardize(Dataset(X, y, spec.n_bins, _names(tags)))
    return data, GroundTruth(tuple(tags))


def generate_lupi_clean(spec: GenSpec) -> tuple[LupiDataset, GroundTruth]:
    """Privileged block = clean variables, regular block = clean + N(0, 1)."""
    if spec.lupi_mode is not LupiMode.CLEAN:
        raise DataError("generate_lupi_clean needs lupi_mode=clean")
    relevant, tags, score = _informative_block(spec, "lupi")
    y = equal_frequency_binning(score, spec.n_bins)
    irr = stream(spec.seed, "lupi/irrelevant").normal(size=(spec.n_samples, spec.n_irrelevant))
    clean = np.hstack([relevant, irr])
    clean = (clean - clean.mean(axis=0)) / clean.std(axis=0)
    noisy = clean + stream(spec.seed, "lupi/epsilon").normal(size=clean.shape)
    tags = tags + [Relevance.IRRELEVANT] * spec.n_irrelevant
    reg, _ = standardize(Dataset(noisy, y, spec.n_bins, _names(tags)))
    return (LupiDataset(reg, clean, _names(tags, "p")),
            GroundTruth(tuple(tags), tuple(tags)))


def generate_lupi_noise_priv(spec: GenSpec) -> tuple[LupiDataset, GroundTruth]:
    """Regular data as in :func:`generate` plus pure-noise privileged columns."""
    if spec.lupi_mode is not LupiMode.NOISE:
        raise DataError("generate_lupi_noise_priv needs lupi_mode=noise")
    if spec.n_priv_irrelevant < 1:
        raise DataError("need at least one privileged noise column")
    reg, truth = _generate_regular(replace(spec, lupi_mode=LupiMode.NONE))
    Xs = stream(spec.seed, "lupi/privileged-noise").normal(size=(spec.n_samples, spec.n_priv_irrelevant))
    Xs = (Xs - Xs.mean(axis=0)) / Xs.std(axis=0)
    ptags = (Relevance.IRRELEVANT,) * spec.n_priv_irrelevant
    return LupiDataset(reg, Xs, _names(ptags, "p")), GroundTruth(truth.regular, ptags)


SEMANTIC_SIGMAS = (0.1, 0.5, 2.0)


def generate_semantic_scenario(seed: int = 0, n_bins: int = 5) -> tuple[LupiDataset, GroundTruth]:
    """400 samples in four groups of 100; group g < 3 gets noise on strong feature g.

    Privileged column g holds the noise realised in group g and 0 elsewhere,
    scaled to unit second moment.
    """
    m, group = 400, 100
    Z = stream(seed, "semantic/strong").normal(size=(m, 3))
    # equal weights, so privileged relevance differs only through the noise level
    y = equal_frequency_binning(Z.sum(axis=1), n_bins)
    noise = stream(seed, "semantic/noise").normal(size=(m, 3))
    priv = np.zeros((m, 3))
    for g, sigma in enumerate(SEMANTIC_SIGMAS):
        rows = slice(g * group, (g + 1) * group)
        priv[rows, g] = sigma * noise[rows, g]
    X = np.hstack([Z + priv, stream(seed, "semantic/irrelevant").normal(size=(m, 3))])
    # unit second moment without centring, so rows outside a group stay exactly 0
    priv = priv / np.sqrt((priv ** 2).mean(axis=0))
    tags = (Relevance.STRONG,) * 3 + (Relevance.IRRELEVANT,) * 3
    ptags = (Relevance.STRONG,) * 3
    reg, _ = standardize(Dataset(X, y, n_bins, _names(tags)))
    return LupiDataset(reg, priv, ("noise_g1", "noise_g2", "noise_g3")), GroundTruth(tags, ptags)


def _names(tags, prefix: str = "") -> tuple[str, ...]:
    short = {Relevance.STRONG: "s", Relevance.WEAK: "w", Relevance.IRRELEVANT: "i"}
    return tuple(f"{prefix}{short[t]}{k}" for k, t in enumerate(tags))


# name: (samples, strong, weak, irrelevant)
_TABLE1 = {
    "set1": (150, 6, 0, 6),
    "set2": (150, 0, 6, 6),
    "set3": (150, 3, 4, 3),
    "set4": (256, 6, 6, 6),
    "set5": (512, 1, 2, 11),
    "set6": (200, 1, 20, 0),
    "set7": (200, 1, 20, 20),
    "set8": (1000, 10, 20, 10),
    "set9": (1000, 10, 20, 200),
}
# name: (samples, strong, weak, irrelevant, privileged irrelevant or None for clean)
_TABLE6 = {
    "lupi-set1": (200, 6, 0, 3, None),
    "lupi-set2": (200, 0, 12, 3, None),
    "lupi-set3": (200, 6, 6, 0, None),
    "lupi-set4": (200, 3, 6, 0, None),
    "lupi-set5": (200, 1, 4, 0, None),
    "lupi-set6": (200, 1, 40, 10, None),
    "lupi-set7": (200, 4, 2, 2, 3),
    "lupi-set8": (200, 0, 4, 2, 3),
}


def preset_names() -> list[str]:
    return list(_TABLE1) + list(_TABLE6)


def preset(name: str, seed: int = 0, noise_sigma: float = 0.0) -> GenSpec:
    key = name.lower()
    if key in _TABLE1:
        m, s, w, i = _TABLE1[key]
        return GenSpec(m, s, w, i, noise_sigma=noise_sigma, seed=seed)
    if key in _TABLE6:
        m, s, w, i, p = _TABLE6[key]
        if p is None:
            return GenSpec(m, s, w, i, noise_sigma=noise_sigma, seed=seed, lupi_mode=LupiMode.CLEAN)
        return GenSpec(m, s, w, i, noise_sigma=noise_sigma, seed=seed, lupi_mode=LupiMode.NOISE,
                       n_priv_irrelevant=p)
    raise DataError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")

"""End-to-end runs: data -> model selection -> profile -> thresholds -> report.

Everything written to ``report.json``, ``profile.csv`` and ``plot.svg`` is a
function of the configuration and the data only, so the files are
byte-identical whatever the worker count.  Wall-clock measurements go to
``timings.csv``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import lp
from .data import (DataError, Dataset, GroundTruth, LupiDataset, Relevance, load_csv, mmae,
                   selection_scores, standardize, standardize_lupi)
from .datagen import GenSpec, generate, generate_semantic_scenario, preset, preset_names
from .lupi import (DEFAULT_GAMMA_GRID, LupiHyperParams, cross_validate_lupi, fit_lupi,
                   lupi_noise_populations, relevance_profile_lupi)
from .ordreg import DEFAULT_C_GRID, Variant, cross_validate, fit
from .pool import default_workers
from .relevance import RelevanceInterval, RelevanceParams, relevance_profile
from .thresholding import (DEFAULT_N_PERM, DEFAULT_P, classify, noise_populations,
                           prediction_intervals)

SEMANTIC = "semantic"


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str | None = None
    csv: str | None = None
    label_col: str = "y"
    privileged_cols: tuple[str, ...] = ()
    truth: str | None = None
    variant: Variant = Variant.EXPLICIT
    C: float | None = None
    C_grid: tuple[float, ...] | None = None
    delta: float = 0.001
    gamma: float | None = None
    gamma_grid: tuple[float, ...] | None = None
    p: float = DEFAULT_P
    n_perm: int = DEFAULT_N_PERM
    seed: int = 0
    workers: int = 1
    out: str | None = None
    noise_sigma: float = 0.0
    normalize: bool = False
    k_folds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if (self.preset is None) == (self.csv is None):
            raise ValueError("give exactly one of preset or csv")
        if self.preset is not None and self.preset.lower() != SEMANTIC \
                and self.preset.lower() not in preset_names():
            raise ValueError(f"unknown preset {self.preset!r}; available: "
                             f"{', '.join(preset_names() + [SEMANTIC])}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.C is not None and not self.C > 0:
            raise ValueError("C must be positive")
        if self.C_grid is not None and (not self.C_grid or min(self.C_grid) <= 0):
            raise ValueError("C grid must be non-empty and positive")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.gamma_grid is not None and (not self.gamma_grid or min(self.gamma_grid) < 0):
            raise ValueError("gamma grid must be non-empty and non-negative")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.n_perm < 2:
            raise ValueError("n_perm must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.out is not None:
            out = Path(self.out)
            if out.exists() and not out.is_dir():
                raise ValueError(f"output path {out} exists and is not a directory")

    def to_json(self) -> dict:
        """Settings that determine the results (no worker count, no paths)."""
        d = asdict(self)
        for key in ("workers", "out"):
            d.pop(key)
        d["variant"] = self.variant.value
        for key in ("privileged_cols", "C_grid", "gamma_grid"):
            if d[key] is not None:
                d[key] = list(d[key])
        if self.csv is not None:
            d["csv"] = Path(self.csv).name
        if self.truth is not None:
            d["truth"] = Path(self.truth).name
        return d


@dataclass
class Report:
    config: dict
    dataset: dict
    hyperparams: dict
    blocks: dict
    metrics: dict
    lp_counts: dict
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self, timings: bool = True) -> dict:
        d = {"config": self.config, "dataset": self.dataset, "hyperparams": self.hyperparams,
             "blocks": self.blocks, "metrics": self.metrics, "lp_counts": self.lp_counts,
             "failures": self.failures}
        if timings:
            d["timings"] = self.timings
        return d

    def dumps(self, timings: bool = False) -> str:
        return json.dumps(self.to_json(timings), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "Report":
        return cls(obj["config"], obj["dataset"], obj["hyperparams"], obj["blocks"],
                   obj.get("metrics", {}), obj["lp_counts"], obj.get("failures", []),
                   obj.get("timings", {}))

    @classmethod
    def loads(cls, text: str) -> "Report":
        return cls.from_json(json.loads(text))


# ---------------------------------------------------------------------------
# data


def load_dataset(config: ExperimentConfig) -> tuple[Dataset | LupiDataset, GroundTruth | None, str]:
    """Dataset, optional ground truth and a source label."""
    if config.preset is not None:
        name = config.preset.lower()
        if name == SEMANTIC:
            data, truth = generate_semantic_scenario(config.seed)
        else:
            data, truth = generate(preset(name, config.seed, config.noise_sigma))
        return data, truth, f"preset:{name}"
    data = load_csv(config.csv, config.label_col, list(config.privileged_cols) or None)
    if isinstance(data, LupiDataset):
        data = standardize_lupi(data)[0]
    else:
        data = standardize(data)[0]
    truth = None
    if config.truth is not None:
        with open(config.truth) as fh:
            manifest = json.load(fh)
        truth = GroundTruth.from_json(manifest.get("ground_truth", manifest))
        n_star = data.n_star if isinstance(data, LupiDataset) else 0
        if len(truth.regular) != data.n or len(truth.privileged) not in (0, n_star):
            raise DataError("ground truth does not match the dataset's feature counts")
    return data, truth, f"csv:{Path(config.csv).name}"


def write_manifest(path: str | Path, spec: GenSpec | None, name: str, seed: int, truth: GroundTruth,
                   data: Dataset | LupiDataset, label_column: str = "y") -> Path:
    lupi = isinstance(data, LupiDataset)
    manifest = {"preset": name, "seed": seed, "spec": spec.to_json() if spec else None,
                "label_column": label_column, "features": data.names(),
                "privileged_columns": data.star_names() if lupi else [],
                "n_bins": data.l, "ground_truth": truth.to_json()}
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# pipeline


class _Clock:
    def __init__(self):
        self.start = time.perf_counter()
        self.marks: dict[str, float] = {}

    def stage(self, name: str):
        clock = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                clock.marks[name] = clock.marks.get(name, 0.0) + time.perf_counter() - self.t0

        return _Ctx()

    def total(self) -> float:
        return time.perf_counter() - self.start


def _run_stage(clock: _Clock, name: str, fn, *args, **kwargs):
    with clock.stage(name):
        try:
            return fn(*args, **kwargs)
        except (lp.LpError, DataError, ValueError, ArithmeticError) as exc:
            raise StageError(name, exc) from exc


def _num(v: float) -> float | None:
    return None if v is None or not math.isfinite(v) else float(v)


def _block(intervals: Sequence[RelevanceInterval], names: Sequence[str], classes, pis, pops,
           norm: float, normalized: bool) -> dict:
    rows = []
    for iv, name, cls in zip(intervals, names, classes):
        rows.append({"feature": iv.feature, "name": name, "lower": _num(iv.lower),
                     "upper": _num(iv.upper), "baseline_weight": _num(iv.baseline_weight),
                     "class": cls.value, "error": iv.error})
    return {"features": rows, "normalized": normalized, "norm": norm,
            "thresholds": {"upper_minrel": pis.upper_minrel, "upper_maxrel": pis.upper_maxrel,
                           "p": pis.p},
            "population": pops.to_json()}


def _scaled_pis(pis, factor):
    return replace(pis, upper_minrel=pis.upper_minrel * factor, upper_maxrel=pis.upper_maxrel * factor)


def run_profile(config: ExperimentConfig) -> Report:
    """Full pipeline; writes the report files when ``config.out`` is set."""
    clock = _Clock()
    counts = {"cv": 0, "baseline": 0, "bounds": 0, "permutation": 0}
    data, truth, source = _run_stage(clock, "load", load_dataset, config)
    lupi = isinstance(data, LupiDataset)
    workers = config.workers
    dataset = {"source": source, "m": data.m, "n": data.n, "l": data.l, "names": data.names(),
               "n_star": data.n_star if lupi else 0,
               "privileged_names": data.star_names() if lupi else []}

    hyper: dict = {}
    if lupi:
        C_grid = (config.C,) if config.C is not None else (config.C_grid or DEFAULT_C_GRID)
        g_grid = (config.gamma,) if config.gamma is not None else (config.gamma_grid or DEFAULT_GAMMA_GRID)
        if len(C_grid) * len(g_grid) > 1:
            params, scores, counts["cv"] = _run_stage(clock, "cv", cross_validate_lupi, data, C_grid,
                                                      g_grid, config.k_folds, config.seed, workers)
            hyper["cv_mmae"] = [[C, g, s] for (C, g), s in sorted(scores.items())]
        else:
            params = LupiHyperParams(C_grid[0], g_grid[0])
        hyper.update({"C": params.C, "gamma": params.gamma})
    else:
        C_grid = (config.C,) if config.C is not None else (config.C_grid or DEFAULT_C_GRID)
        if len(C_grid) > 1:
            cv = _run_stage(clock, "cv", cross_validate, data, config.variant, C_grid,
                            config.k_folds, config.seed, workers)
            C = cv.best_C
            counts["cv"] = cv.lp_count
            hyper["cv_mmae"] = [[c, s] for c, s in sorted(cv.mean_mmae.items())]
        else:
            C = C_grid[0]
        hyper["C"] = C
        rparams = RelevanceParams(delta=config.delta, C=C, variant=config.variant)

    before = lp.solve_count()
    if lupi:
        baseline = _run_stage(clock, "baseline", fit_lupi, data, params)
    else:
        baseline = _run_stage(clock, "baseline", fit, data, C, config.variant)
    counts["baseline"] = lp.solve_count() - before

    if lupi:
        profile = _run_stage(clock, "profile", relevance_profile_lupi, data, params, config.delta,
                             workers, False, baseline)
        counts["bounds"] = profile.lp_count
        pops = _run_stage(clock, "permutation", lupi_noise_populations, data, params, config.delta,
                          config.n_perm, config.seed, workers)
        counts["permutation"] = pops[0].lp_count + pops[1].lp_count
        blocks_in = [("regular", profile.regular, data.names(), pops[0], baseline.w_l1),
                     ("privileged", profile.privileged, data.star_names(), pops[1], baseline.w_star_l1)]
    else:
        profile = _run_stage(clock, "profile", relevance_profile, data, rparams, workers, False, baseline)
        counts["bounds"] = profile.lp_count
        pop = _run_stage(clock, "permutation", noise_populations, data, rparams, config.n_perm,
                         config.seed, workers)
        counts["permutation"] = pop.lp_count
        blocks_in = [("regular", profile.intervals, data.names(), pop, baseline.w_l1)]
    counts["total"] = sum(counts.values())

    blocks, failures, metrics = {}, [], {}
    with clock.stage("classify"):
        for name, intervals, names, pop, norm in blocks_in:
            pis = prediction_intervals(pop, config.p)
            classes = classify(intervals, pis)
            for iv in intervals:
                if iv.failed:
                    failures.append({"block": name, "feature": iv.feature, "error": iv.error})
            if pop.failures:
                failures.append({"block": name, "feature": None,
                                 "error": f"{pop.failures} permutation draws failed"})
            shown = intervals
            if config.normalize:
                factor = 1.0 / norm if norm > 0 else 0.0
                shown = [iv.scaled(factor) for iv in intervals]
                pis = _scaled_pis(pis, factor)
            blocks[name] = _block(shown, names, classes, pis, pop, norm, config.normalize)
            if truth is not None and (name == "regular" or truth.privileged):
                picked = {j for j, c in enumerate(classes) if c.relevant}
                f1, prec, rec = selection_scores(picked, truth, name)
                metrics.setdefault("selection", {})[name] = {"f1": f1, "precision": prec, "recall": rec}
        metrics["train_mmae"] = mmae(data.y, baseline.predict(data.X), data.l)

    hyper["mu_X"] = baseline.mu_X
    hyper["w"] = baseline.w.tolist()
    hyper["b"] = baseline.b.tolist()
    if lupi:
        hyper.update({"w_star_chi": baseline.w_star_chi.tolist(), "w_star_xi": baseline.w_star_xi.tolist(),
                      "d_chi": baseline.d_chi.tolist(), "d_xi": baseline.d_xi.tolist()})
    if truth is not None:
        dataset["ground_truth"] = truth.to_json()
    timings = dict(clock.marks)
    timings["total"] = clock.total()
    timings["per_lp"] = timings["total"] / counts["total"] if counts["total"] else 0.0
    timings["workers"] = workers
    report = Report(config.to_json(), dataset, hyper, blocks, metrics, counts, failures, timings)
    if config.out is not None:
        write_outputs(report, config.out)
    return report


# ---------------------------------------------------------------------------
# outputs


def profile_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["block", "feature", "name", "lower", "upper", "baseline_weight", "class", "error"])
    for block in ("regular", "privileged"):
        if block not in report.blocks:
            continue
        for row in report.blocks[block]["features"]:
            w.writerow([block, row["feature"], row["name"], _fmt(row["lower"]), _fmt(row["upper"]),
                        _fmt(row["baseline_weight"]), row["class"], row["error"] or ""])
    return buf.getvalue()


def timings_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "seconds"])
    for key, value in report.timings.items():
        w.writerow([key, value if key == "workers" else f"{value:.6f}"])
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_outputs(report: Report, out: str | Path) -> Path:
    from .plot import render_svg

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps(timings=False))
    (out / "profile.csv").write_text(profile_csv(report))
    (out / "plot.svg").write_text(render_svg(report))
    (out / "timings.csv").write_text(timings_csv(report))
    return out


# ---------------------------------------------------------------------------
# benchmark suite and scaling


@dataclass(frozen=True)
class BenchRow:
    preset: str
    block: str
    runs: int
    failed: int
    f1: float
    f1_std: float | None
    precision: float
    precision_std: float | None
    recall: float
    recall_std: float | None


def run_benchmark_suite(presets: Sequence[str], n_repeats: int, config: ExperimentConfig
                        ) -> list[BenchRow]:
    """Mean F1/precision/recall per preset (and block) over seeds ``seed .. seed + n_repeats - 1``.

    Runs that fail are excluded from the means and counted in ``failed``.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    rows = []
    for name in presets:
        scores: dict[str, list] = {}
        failed = 0
        for r in range(n_repeats):
            cfg = replace(config, preset=name, csv=None, seed=config.seed + r, out=None)
            try:
                report = run_profile(cfg)
            except StageError:
                failed += 1
                continue
            if not report.ok:
                failed += 1
                continue
            for block, s in report.metrics.get("selection", {}).items():
                scores.setdefault(block, []).append((s["f1"], s["precision"], s["recall"]))
        if not scores:
            scores["regular"] = []
        for block, vals in scores.items():
            arr = np.asarray(vals, dtype=float).reshape(-1, 3)
            mean = arr.mean(axis=0) if len(arr) else np.full(3, math.nan)
            std = arr.std(axis=0, ddof=1) if len(arr) > 1 else [None] * 3
            rows.append(BenchRow(name, block, len(arr), failed, float(mean[0]), _opt(std[0]),
                                 float(mean[1]), _opt(std[1]), float(mean[2]), _opt(std[2])))
    return rows


def _opt(v):
    return None if v is None else float(v)


def bench_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["preset", "block", "runs", "failed", "f1", "f1_std", "precision", "precision_std",
                "recall", "recall_std"])
    for r in rows:
        w.writerow([r.preset, r.block, r.runs, r.failed] + [
            "" if v is None else f"{v:.4f}"
            for v in (r.f1, r.f1_std, r.precision, r.precision_std, r.recall, r.recall_std)])
    return buf.getvalue()


@dataclass(frozen=True)
class ScaleRow:
    n_samples: int
    n_features: int
    lp_count: int
    seconds_1: float | None
    seconds_w: float | None
    workers: int
    speedup: float | None
    status: str = "ok"


def scaling_dataset(n_samples: int, n_features: int, seed: int = 0) -> Dataset:
    """A quarter strong, a quarter weak (even count), the rest irrelevant."""
    if n_features < 1:
        raise ValueError("need at least one feature")
    strong = max(1, n_features // 4)
    weak = 2 * ((n_features // 4) // 2)
    if strong + weak > n_features:
        weak = 0
    spec = GenSpec(n_samples, strong, weak, n_features - strong - weak, seed=seed)
    return generate(spec)[0]


def run_scaling(config: ExperimentConfig, instance_grid: Sequence[int], feature_grid: Sequence[int],
                timeout: float | None = None) -> list[ScaleRow]:
    """Wall time of one relevance profile per (samples, features) cell, 1 vs ``config.workers``.

    A cell whose single-worker run exceeds ``timeout`` seconds skips the
    parallel run and is marked ``timeout``.
    """
    if not instance_grid or not feature_grid:
        raise ValueError("instance and feature grids must be non-empty")
    rows = []
    params = RelevanceParams(delta=config.delta, C=config.C or 1.0, variant=config.variant)
    for m in instance_grid:
        for d in feature_grid:
            data = scaling_dataset(int(m), int(d), config.seed)
            t0 = time.perf_counter()
            prof = relevance_profile(data, params, 1)
            t1 = time.perf_counter() - t0
            if timeout is not None and t1 > timeout:
                rows.append(ScaleRow(m, d, prof.lp_count, t1, None, config.workers, None, "timeout"))
                continue
            t0 = time.perf_counter()
            relevance_profile(data, params, config.workers)
            tw = time.perf_counter() - t0
            rows.append(ScaleRow(m, d, prof.lp_count, t1, tw, config.workers, t1 / tw if tw > 0 else None))
    return rows


def scaling_csv(rows: Sequence[ScaleRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_samples", "n_features", "lp_count", "seconds_1", "seconds_w", "workers", "speedup",
                "status"])
    for r in rows:
        w.writerow([r.n_samples, r.n_features, r.lp_count] + [
            "" if v is None else f"{v:.4f}" for v in (r.seconds_1, r.seconds_w)] + [
            r.workers, "" if r.speedup is None else f"{r.speedup:.3f}", r.status])
    return buf.getvalue()


def default_config(**kw) -> ExperimentConfig:
    kw.setdefault("workers", default_workers())
    return ExperimentConfig(**kw)

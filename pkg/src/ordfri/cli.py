"""Command line: ``ordfri {generate,run,bench,scale,plot}``.

Exit codes: 0 success, 1 report written but some LPs failed, 2 usage error,
3 a pipeline stage failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DataError, write_csv
from .datagen import generate, generate_semantic_scenario, preset, preset_names
from .experiment import (SEMANTIC, ExperimentConfig, Report, StageError, bench_csv, run_benchmark_suite,
                         run_profile, run_scaling, scaling_csv, write_manifest)
from .plot import emit_plot
from .pool import default_workers

EXIT_OK, EXIT_LP_FAILURE, EXIT_USAGE, EXIT_STAGE = 0, 1, 2, 3


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _ints(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _add_model_flags(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", help=f"one of {', '.join(preset_names() + [SEMANTIC])}")
        src.add_argument("--csv", help="CSV file with a header row")
        p.add_argument("--label-col", default="y")
        p.add_argument("--privileged-cols", type=_names, default=(),
                       help="comma-separated names or indices of privileged columns")
        p.add_argument("--truth", help="JSON manifest with ground truth for a CSV dataset")
    p.add_argument("--variant", choices=["explicit", "implicit"], default="explicit")
    p.add_argument("--c", type=float, help="fixed C (skips cross-validation)")
    p.add_argument("--c-grid", type=_floats, help="C values for cross-validation")
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--gamma", type=float, help="fixed gamma for privileged data")
    p.add_argument("--gamma-grid", type=_floats)
    p.add_argument("--p", type=float, default=0.999)
    p.add_argument("--n-perm", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=default_workers())
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--k-folds", type=int, default=5)


def _config(args, **over) -> ExperimentConfig:
    kw = dict(preset=getattr(args, "preset", None), csv=getattr(args, "csv", None),
              label_col=getattr(args, "label_col", "y"),
              privileged_cols=getattr(args, "privileged_cols", ()),
              truth=getattr(args, "truth", None), variant=args.variant, C=args.c, C_grid=args.c_grid,
              delta=args.delta, gamma=args.gamma, gamma_grid=args.gamma_grid, p=args.p,
              n_perm=args.n_perm, seed=args.seed, workers=args.workers, out=getattr(args, "out", None),
              noise_sigma=args.noise_sigma, normalize=args.normalize, k_folds=args.k_folds)
    kw.update(over)
    return ExperimentConfig(**kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordfri", description="Feature relevance intervals for "
                                     "ordinal regression, with privileged information.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset and its manifest")
    g.add_argument("--preset", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("run", help="profile one dataset")
    _add_model_flags(r)
    r.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("bench", help="mean selection scores over seeded repeats")
    b.add_argument("--presets", type=_names, default=("set1", "set2", "set3", "set4", "set5"))
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", required=True, help="output CSV path")
    _add_model_flags(b, data=False)

    s = sub.add_parser("scale", help="wall time for 1 vs W workers over a size grid")
    s.add_argument("--instances", type=_ints, default=(50, 100, 200))
    s.add_argument("--features", type=_ints, default=(20,))
    s.add_argument("--timeout", type=float)
    s.add_argument("--out", required=True, help="output CSV path")
    _add_model_flags(s, data=False)

    pl = sub.add_parser("plot", help="redraw plot.svg from a report.json")
    pl.add_argument("--report", required=True)
    pl.add_argument("--out", required=True)
    return parser


def _generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.preset.lower()
    if name == SEMANTIC:
        spec = None
        data, truth = generate_semantic_scenario(args.seed)
    else:
        spec = preset(name, args.seed, args.noise_sigma)
        data, truth = generate(spec)
    write_csv(out / "data.csv", data)
    write_manifest(out / "manifest.json", spec, name, args.seed, truth, data)
    print(f"wrote {out / 'data.csv'} ({data.m} x {data.n}) and {out / 'manifest.json'}")
    return EXIT_OK


def _run(args) -> int:
    report = run_profile(_config(args))
    sel = report.metrics.get("selection", {})
    for block, s in sel.items():
        print(f"{block}: F1 {s['f1']:.3f} precision {s['precision']:.3f} recall {s['recall']:.3f}")
    print(f"LPs solved: {report.lp_counts['total']}; report in {args.out}")
    if not report.ok:
        for f in report.failures:
            print(f"LP failure ({f['block']} feature {f['feature']}): {f['error']}", file=sys.stderr)
        return EXIT_LP_FAILURE
    return EXIT_OK


def _bench(args) -> int:
    if args.repeats < 1:
        raise ValueError("--repeats must be >= 1")
    config = _config(args, preset=args.presets[0], out=None)
    rows = run_benchmark_suite(args.presets, args.repeats, config)
    text = bench_csv(rows)
    Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_LP_FAILURE if any(r.failed for r in rows) else EXIT_OK


def _scale(args) -> int:
    config = _config(args, preset="set1", out=None)
    rows = run_scaling(config, args.instances, args.features, args.timeout)
    text = scaling_csv(rows)
    Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def _plot(args) -> int:
    report = Report.loads(Path(args.report).read_text())
    emit_plot(report, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": _generate, "run": _run, "bench": _bench, "scale": _scale, "plot": _plot}
    try:
        return handlers[args.command](args)
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"ordfri {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

import csv
import json
import subprocess
import sys

import pytest

from ordfri import lp, relevance
from ordfri.cli import main
from ordfri.experiment import ExperimentConfig, Report, run_profile
from ordfri.plot import render_svg

FAST = ["--c", "1.0", "--n-perm", "6", "--workers", "1"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generate_writes_data_and_manifest(tmp_path, capsys):
    assert main(["generate", "--preset", "set3", "--seed", "2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "data.csv")
    assert len(rows) == 150 and len(rows[0]) == 11
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 2 and manifest["spec"]["n_weak"] == 4
    assert manifest["ground_truth"]["regular"][:3] == ["Strong"] * 3


def test_run_preset_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--preset", "set1", "--seed", "0", "--out", str(out)] + FAST) == 0
    assert "regular: F1" in capsys.readouterr().out
    report = Report.loads((out / "report.json").read_text())
    assert report.lp_counts["bounds"] == 3 * 12
    assert report.lp_counts["baseline"] == 1 and report.lp_counts["cv"] == 0
    assert report.lp_counts["permutation"] == 6 * 4
    assert "timings" not in json.loads((out / "report.json").read_text())
    assert "workers" not in report.config
    rows = read_csv(out / "profile.csv")
    assert len(rows) == 12 and {r["class"] for r in rows} <= {"Strong", "Weak", "Irrelevant"}
    assert [r["stage"] for r in read_csv(out / "timings.csv")][-1] == "workers"
    svg = (out / "plot.svg").read_text()
    assert svg.count('class="bar"') == 12 and svg.count("stroke-dasharray") == 1


def test_run_with_cv_records_grid(tmp_path):
    out = tmp_path / "cv"
    args = ["run", "--preset", "set1", "--c-grid", "0.1,1", "--k-folds", "3", "--n-perm", "4",
            "--out", str(out)]
    assert main(args) == 0
    report = Report.loads((out / "report.json").read_text())
    assert [c for c, _ in report.hyperparams["cv_mmae"]] == [0.1, 1.0]
    assert report.lp_counts["cv"] == 2 * 3


def test_run_lupi_two_panels(tmp_path):
    out = tmp_path / "lupi"
    args = ["run", "--preset", "lupi-set7", "--gamma", "1", "--out", str(out)] + FAST
    assert main(args) == 0
    report = Report.loads((out / "report.json").read_text())
    assert set(report.blocks) == {"regular", "privileged"}
    assert report.lp_counts["bounds"] == 3 * 8 + 6 * 3
    assert report.lp_counts["permutation"] == 6 * 4 + 6 * 7
    assert set(report.metrics["selection"]) == {"regular", "privileged"}
    svg = (out / "plot.svg").read_text()
    assert svg.count('<g class="panel">') == 2
    assert svg.count('class="bar"') == 11 and svg.count("stroke-dasharray") == 2


def test_csv_roundtrip_with_and_without_truth(tmp_path):
    gen = tmp_path / "gen"
    assert main(["generate", "--preset", "set1", "--seed", "1", "--out", str(gen)]) == 0
    plain = ExperimentConfig(csv=str(gen / "data.csv"), C=1.0, n_perm=4)
    report = run_profile(plain)
    assert "selection" not in report.metrics and "train_mmae" in report.metrics
    truth = run_profile(ExperimentConfig(csv=str(gen / "data.csv"), truth=str(gen / "manifest.json"),
                                         C=1.0, n_perm=4))
    assert "f1" in truth.metrics["selection"]["regular"]
    assert truth.config["csv"] == "data.csv"


def test_csv_with_privileged_columns(tmp_path):
    gen = tmp_path / "gen"
    assert main(["generate", "--preset", "lupi-set7", "--out", str(gen)]) == 0
    out = tmp_path / "run"
    args = ["run", "--csv", str(gen / "data.csv"), "--privileged-cols", "pi0,pi1,pi2",
            "--truth", str(gen / "manifest.json"), "--gamma", "1", "--out", str(out)] + FAST
    assert main(args) == 0
    report = Report.loads((out / "report.json").read_text())
    assert report.dataset["n_star"] == 3


def test_plot_subcommand_matches_run_output(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--preset", "set5", "--out", str(out)] + FAST) == 0
    redrawn = tmp_path / "again.svg"
    assert main(["plot", "--report", str(out / "report.json"), "--out", str(redrawn)]) == 0
    assert redrawn.read_text() == (out / "plot.svg").read_text()


def test_report_json_roundtrip(tmp_path):
    report = run_profile(ExperimentConfig(preset="set1", C=1.0, n_perm=4))
    back = Report.loads(report.dumps())
    assert back.dumps() == report.dumps()
    assert render_svg(back) == render_svg(report.to_json())


def test_lp_failure_exit_code(tmp_path, monkeypatch, capsys):
    real = relevance.max_relevance

    def flaky(data, baseline, j, params, family=None):
        if j == 2:
            raise lp.LpError("maxrel(feature 2): forced failure", lp.Status.NUMERICAL_FAILURE)
        return real(data, baseline, j, params, family)

    monkeypatch.setattr(relevance, "max_relevance", flaky)
    out = tmp_path / "fail"
    assert main(["run", "--preset", "set1", "--out", str(out)] + FAST) == 1
    assert "forced failure" in capsys.readouterr().err
    report = Report.loads((out / "report.json").read_text())
    row = report.blocks["regular"]["features"][2]
    assert row["lower"] is None and row["class"] == "Irrelevant" and "forced" in row["error"]
    assert report.failures[0]["feature"] == 2


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "set1", "--c-grid", "", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert main(["run", "--preset", "nope", "--out", str(tmp_path)]) == 2
    assert main(["run", "--preset", "set1", "--n-perm", "1", "--out", str(tmp_path)]) == 2
    assert main(["plot", "--report", str(tmp_path / "missing.json"), "--out", "x.svg"]) == 2
    assert main(["generate", "--preset", "nope", "--out", str(tmp_path)]) == 2


def test_stage_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,y\n1,2,1\n3,4,1\n")
    assert main(["run", "--csv", str(bad), "--out", str(tmp_path / "o")] + FAST) == 3
    assert "error in stage load" in capsys.readouterr().err


def test_bench_and_scale(tmp_path):
    bench = tmp_path / "bench.csv"
    assert main(["bench", "--presets", "set1", "--repeats", "2", "--out", str(bench)] + FAST) == 0
    rows = read_csv(bench)
    assert rows[0]["preset"] == "set1" and rows[0]["runs"] == "2" and rows[0]["f1_std"] != ""
    scale = tmp_path / "scale.csv"
    assert main(["scale", "--instances", "30,40", "--features", "4", "--out", str(scale)] + FAST) == 0
    rows = read_csv(scale)
    assert [r["n_samples"] for r in rows] == ["30", "40"]
    assert all(r["lp_count"] == str(1 + 3 * 4) for r in rows)


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ordfri", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "generate" in res.stdout

import json
import subprocess
import sys

import numpy as np
import pytest

from mixqrf import io
from mixqrf.cli import main, preprocess_high
from mixqrf.evaluation import backtest
from mixqrf.midas import HighFreqSeries
from mixqrf.exceptions import DataFormatError


def run(*args):
    return main([str(a) for a in args])


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def mixed_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("mixed")
    rng = np.random.default_rng(0)
    P = 30
    period = np.repeat(np.arange(P), 15)
    z = np.cumsum(rng.standard_normal(P)) * 0.3
    scale = np.exp(0.5 * np.clip(z[np.maximum(period - 1, 0)], -2, 2))
    price = 100 * np.exp(np.cumsum(0.01 * scale * rng.standard_normal(period.size)))
    io.write_csv(d / "high.csv", ["date", "period", "y", "x"],
                 [[f"d{i:05d}" for i in range(period.size)], period, price,
                  rng.standard_normal(period.size)])
    io.write_csv(d / "low.csv", ["period", "z"], [np.arange(P), z])
    return d


@pytest.fixture(scope="module")
def shift_panel(tmp_path_factory):
    d = tmp_path_factory.mktemp("panel")
    rng = np.random.default_rng(1)
    N, T = 40, 8
    unit = np.repeat(np.arange(N), T)
    x = rng.standard_normal((N * T, 2))
    y = x[:, 0] + np.where(unit % 2, 5.0, -5.0) + 0.5 * rng.standard_normal(N * T)
    io.write_csv(d / "panel.csv", ["unit", "time", "y", "x1", "x2"],
                 [[f"u{u}" for u in unit], np.tile(np.arange(T), N), y, x[:, 0], x[:, 1]])
    io.write_csv(d / "query.csv", ["x1", "x2"], [[0.0, 1.0], [0.0, 0.0]])
    return d


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("simulate", "--scenario", "TT-L", "--seed", 7, "--n-units", 20,
                   "--out", tmp_path / name) == 0
    for f in ("train.csv", "test.csv", "oracle.csv", "effects.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    panel, _ = io.read_panel(tmp_path / "a" / "train.csv")
    assert panel.n_units == 20 and panel.n_obs == 100


def test_fit_fmqrf_recovers_planted_shifts(shift_panel, tmp_path):
    assert run("fit-fmqrf", "--panel", shift_panel / "panel.csv", "--k", 2, "--tau", 0.5,
               "--n-trees", 40, "--max-iter", 20, "--out", tmp_path) == 0
    fit = read_json(tmp_path / "report.json")["fits"]["0.5"]
    alpha = np.sort(fit["alpha"])
    assert alpha[0] == pytest.approx(-5, abs=0.5) and alpha[1] == pytest.approx(5, abs=0.5)
    groups = fit["assignment"]
    assert len({groups[f"u{i}"] for i in range(0, 40, 2)}) == 1
    assert groups["u0"] != groups["u1"]
    # saved model reproduces the in-sample predictions
    assert run("predict", "--model", tmp_path / "model.json", "--data",
               shift_panel / "panel.csv", "--out", tmp_path / "p") == 0
    assert (tmp_path / "p" / "predictions.csv").read_bytes() == \
        (tmp_path / "predictions.csv").read_bytes()


def test_backtest_matches_library_exactly(mixed_files, tmp_path):
    fit = tmp_path / "fit"
    assert run("fit-midas-qrf", "--high", mixed_files / "high.csv", "--low",
               mixed_files / "low.csv", "--log-returns", "y", "--n-trees", 20,
               "--tau", "0.01,0.05", "--out", fit) == 0
    assert run("backtest", "--predictions", fit / "predictions.csv", "--outcomes",
               fit / "outcomes.csv", "--tau", 0.01, "--out", tmp_path / "bt") == 0
    got = read_json(tmp_path / "bt" / "report.json")["backtest"]["0.01"]
    rid, q = io.read_predictions(fit / "predictions.csv")[0.01]
    out = io.read_csv(fit / "outcomes.csv")
    y = dict(zip(out.numbers("row_id").tolist(), out.floats("y")))
    ref = backtest(np.array([y[r] for r in rid]), q, 0.01).to_dict()
    for test in ("uc", "cc", "dq"):
        assert got[test]["p_value"] == ref[test]["p_value"]
        assert got[test]["statistic"] == ref[test]["statistic"]
    assert got["passes"]["uc"] == (ref["uc"]["p_value"] > 0.01)
    fit_report = read_json(fit / "report.json")["backtest"]["0.01"]
    assert fit_report["uc"] == got["uc"]


def test_midas_predictions_start_after_warmup(mixed_files, tmp_path):
    assert run("fit-midas-qrf", "--high", mixed_files / "high.csv", "--low",
               mixed_files / "low.csv", "--log-returns", "y", "--n-trees", 10,
               "--warmup", 120, "--refit-every", 50, "--out", tmp_path) == 0
    rid, _ = io.read_predictions(tmp_path / "predictions.csv")[0.05]
    report = read_json(tmp_path / "report.json")
    assert rid.size == report["n_rows"] - 120
    assert report["warmup"] == 120


def test_dynamic_and_predict_next(mixed_files, tmp_path):
    lines = (mixed_files / "high.csv").read_text().splitlines()
    (tmp_path / "head.csv").write_text("\n".join(lines[:301]) + "\n")
    assert run("fit-dynamic", "--high", tmp_path / "head.csv", "--low", mixed_files / "low.csv",
               "--log-returns", "y", "--n-trees", 10, "--warmup", 60, "--restarts", 3,
               "--out", tmp_path / "dyn") == 0
    assert run("predict", "--model", tmp_path / "dyn" / "model.json", "--data",
               mixed_files / "high.csv", "--out", tmp_path / "next") == 0
    rid, q = io.read_predictions(tmp_path / "next" / "predictions.csv")[0.05]
    assert rid[0] == 300 and rid[-1] == len(lines) - 2
    assert np.all(np.isfinite(q))


def test_importance_and_bootstrap_outputs(shift_panel, tmp_path):
    assert run("importance", "--data", shift_panel / "panel.csv", "--n-trees", 20,
               "--out", tmp_path / "imp") == 0
    imp = io.read_csv(tmp_path / "imp" / "importance.csv")
    assert sorted(imp.numbers("rank").tolist()) == [1, 2]
    assert run("bootstrap", "--panel", shift_panel / "panel.csv", "--query",
               shift_panel / "query.csv", "--k", 2, "--n-trees", 15, "--max-iter", 5,
               "--replications", 4, "--out", tmp_path / "bs") == 0
    bs = io.read_csv(tmp_path / "bs" / "bootstrap.csv")
    mean, se = bs.floats("mean"), bs.floats("se")
    assert np.all(se >= 0)
    # population-level prediction follows x1 since the shifts average out
    assert mean[0] == pytest.approx(0.0, abs=1.5) and mean[1] - mean[0] > 0.3


def test_config_precedence_and_echo(shift_panel, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nn-trees = 6\nseed=3\ntau=0.25,0.75\n")
    assert run("fit-qrf", "--data", shift_panel / "panel.csv", "--config", cfg,
               "--seed", 9, "--out", tmp_path / "q") == 0
    echo = (tmp_path / "q" / "config.txt").read_text().splitlines()
    assert "n-trees=6" in echo and "seed=9" in echo and "tau=0.25,0.75" in echo
    # the echo replays to identical artifacts
    assert run("fit-qrf", "--config", tmp_path / "q" / "config.txt",
               "--out", tmp_path / "r") == 0
    for f in ("predictions.csv", "model.json", "report.json"):
        assert (tmp_path / "q" / f).read_bytes() == (tmp_path / "r" / f).read_bytes()


@pytest.mark.parametrize("args", [
    ["fit-qrf", "--nope"],
    ["fit-qrf"],
    ["frobnicate"],
    ["simulate", "--scenario", "XX-X"],
    ["fit-qrf", "--data", "x.csv", "--tau", "1.5"],
])
def test_usage_errors_exit_1(args, tmp_path, capsys):
    extra = [] if args[0] == "frobnicate" else ["--out", tmp_path]
    assert run(*args, *extra) == 1
    assert "usage error" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("unit,time,y,x\na,0,1.0,2.0\na,1,1.0,zz\n")
    assert run("fit-fmqrf", "--panel", bad, "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "row 3" in err and "'x'" in err
    assert run("fit-qrf", "--data", tmp_path / "missing.csv", "--out", tmp_path) == 2


def test_log_returns_need_positive_prices():
    high = HighFreqSeries(period=np.array([0, 0, 1]), index=np.arange(3),
                          y=np.array([1.0, -2.0, 3.0]), X=np.empty((3, 0)), names=[])
    with pytest.raises(DataFormatError, match="row 3, column 'y'"):
        preprocess_high(high, log_returns=["y"])
    out = preprocess_high(HighFreqSeries(period=np.array([0, 0, 1]), index=np.arange(3),
                                         y=np.array([1.0, np.e, np.e]), X=np.empty((3, 0)),
                                         names=[]), log_returns=["y"])
    np.testing.assert_allclose(out.y, [100.0, 0.0])
    assert out.index.tolist() == [1, 2]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mixqrf", "simulate", "--n-units", "3",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "oracle.csv").exists()

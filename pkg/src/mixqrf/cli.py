"""Command-line front end.

Every subcommand resolves its settings as built-in defaults, then a
``key=value`` config file (``--config``), then explicit flags. The resolved
settings are echoed to ``config.txt`` in the output directory in the same
``key=value`` format, so a run can be replayed with ``--config``.

Exit status is 0 on success, 1 on a usage or configuration error and 2 on
a data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .dynamic import default_warmup, expanding_window_forecast, fit_dynamic_midas_qrf
from .evaluation import backtest, check_loss
from .exceptions import DataFormatError, InvalidConfigError, MixQRFError
from .fmqrf import (EmConfig, FmQrfModel, MixtureState, bootstrap_se, fit_fm_qrf,
                    predict_fm_qrf)
from .forest import TrainConfig, fit_forest, permutation_importance
from .midas import (DEFAULT_OMEGA2_GRID, HighFreqSeries, LowFreqSeries, MidasSpec,
                    align_mixed_frequency)
from .simulation import SCENARIOS, simulate_scenario

__all__ = ["main", "build_parser", "UsageError"]

log = logging.getLogger("mixqrf")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
ID_COLUMNS = ("row_id", "date", "period", "unit", "time")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---- option groups ------------------------------------------------------------

def _floats(text):
    return [float(v) for v in _split(text)]


def _ints(text):
    return [int(v) for v in _split(text)]


def _names(text):
    return _split(text)


def _split(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [v for v in str(text).replace(",", " ").split() if v]


def _opt_int(text):
    return None if str(text).lower() == "none" else int(text)


def _opt_float(text):
    return None if str(text).lower() == "none" else float(text)


def _opt(p, flag, type_, default, help_):
    # defaults are kept aside so the config file can sit between them and flags
    p.add_argument(flag, type=type_, default=argparse.SUPPRESS, help=f"{help_} (default: {default})")
    p.set_defaults(**{"_default_" + flag.lstrip("-").replace("-", "_"): default})


def _common(p, taus):
    p.add_argument("--config", default=None, help="key=value file with settings")
    _opt(p, "--seed", int, 0, "random seed")
    _opt(p, "--tau", _floats, taus, "comma-separated quantile levels")
    _opt(p, "--out", str, "out", "output directory")
    _opt(p, "--threads", int, 1, "worker threads, 0 = all cores")


def _forest(p, n_trees=100):
    _opt(p, "--n-trees", int, n_trees, "trees per forest")
    _opt(p, "--mtry", _opt_int, None, "candidate features per split")
    _opt(p, "--min-node-size", int, 5, "minimum leaf size")
    _opt(p, "--max-depth", _opt_int, None, "maximum tree depth")
    _opt(p, "--bootstrap-fraction", float, 1.0, "resample size as a fraction of n")


def _mixed_frequency(p):
    _opt(p, "--high", str, None, "high-frequency CSV (date, period, y, ...)")
    _opt(p, "--low", str, None, "low-frequency CSV (period, ...)")
    _opt(p, "--log-returns", _names, [], "columns replaced by 100 * diff(log(x))")
    _opt(p, "--diff", _names, [], "columns replaced by their first difference")
    _opt(p, "--lag-count", int, 3, "MIDAS lags K")
    _opt(p, "--omega1", float, 1.0, "first Beta parameter")
    _opt(p, "--omega2", _opt_float, None, "force a single filter with this omega2")
    _opt(p, "--contemporaneous", _names, [], "daily covariates used without a lag")
    _opt(p, "--outcome-lags", int, 0, "lags of the outcome added as covariates")
    _opt(p, "--warmup", _opt_int, None, "rows before the first forecast")
    _opt(p, "--refit-every", int, 10, "rebuild the forest every N rows")
    _opt(p, "--n-lags", int, 4, "hit lags in the DQ test")
    _opt(p, "--pass-level", float, 0.01, "p-value above which a test passes")


def _mixture(p):
    _opt(p, "--panel", str, None, "panel CSV (unit, time, y, ...)")
    _opt(p, "--k", int, 3, "mixture components")
    _opt(p, "--m-step", str, "closed_form", "closed_form or nelder_mead")
    _opt(p, "--max-iter", int, 50, "EM iterations")
    _opt(p, "--tol", float, 1e-4, "log-likelihood change that stops EM")
    _opt(p, "--alpha-init", str, "gauss_hermite", "gauss_hermite or zero")


def build_parser():
    parser = _Parser(prog="mixqrf", description="Quantile regression forests for "
                     "mixed-frequency and clustered data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    parser.commands = sub.choices

    p = sub.add_parser("simulate", help="simulate a clustered panel scenario")
    _common(p, [0.1, 0.5, 0.9])
    _opt(p, "--scenario", str, "NN-S", f"one of {', '.join(sorted(SCENARIOS))}")
    _opt(p, "--n-units", int, 100, "units")
    _opt(p, "--t-train", int, 5, "training observations per unit")
    _opt(p, "--test-sizes", _ints, [9, 27, 45, 63, 81], "cycled test sizes per unit")

    p = sub.add_parser("fit-qrf", help="fit a quantile regression forest to a table")
    _common(p, [0.5])
    _forest(p)
    _opt(p, "--data", str, None, "CSV with an outcome column and covariates")
    _opt(p, "--y-col", str, "y", "outcome column")

    p = sub.add_parser("fit-midas-qrf", help="expanding-window MIDAS-QRF forecasts")
    _common(p, [0.05])
    _forest(p)
    _mixed_frequency(p)

    p = sub.add_parser("fit-dynamic", help="dynamic MIDAS-QRF with a lagged quantile")
    _common(p, [0.05])
    _forest(p)
    _mixed_frequency(p)
    _opt(p, "--restarts", int, 10, "CaViaR optimiser restarts")

    p = sub.add_parser("fit-fmqrf", help="finite-mixture QRF on a panel")
    _common(p, [0.5])
    _forest(p)
    _mixture(p)

    p = sub.add_parser("predict", help="score new data with a saved model")
    _common(p, [])
    _opt(p, "--model", str, None, "model file")
    _opt(p, "--data", str, None, "CSV in the schema the model was trained on")
    _opt(p, "--low", str, None, "replacement low-frequency CSV")
    _opt(p, "--y-col", str, "y", "outcome column, scored when present")

    p = sub.add_parser("backtest", help="VaR backtests of predictions against outcomes")
    _common(p, [])
    _opt(p, "--predictions", str, None, "predictions CSV (row_id, tau, prediction)")
    _opt(p, "--outcomes", str, None, "CSV with the outcome column; row_id optional")
    _opt(p, "--y-col", str, "y", "outcome column")
    _opt(p, "--n-lags", int, 4, "hit lags in the DQ test")
    _opt(p, "--pass-level", float, 0.01, "p-value above which a test passes")

    p = sub.add_parser("importance", help="permutation importance of a QRF")
    _common(p, [0.5])
    _forest(p)
    _opt(p, "--data", str, None, "CSV with an outcome column and covariates")
    _opt(p, "--y-col", str, "y", "outcome column")
    _opt(p, "--repeats", int, 5, "permutations per feature")

    p = sub.add_parser("bootstrap", help="unit bootstrap standard errors of FM-QRF")
    _common(p, [0.5])
    _forest(p)
    _mixture(p)
    _opt(p, "--query", str, None, "CSV of covariate rows to predict")
    _opt(p, "--replications", int, 50, "bootstrap replications")
    return parser


# ---- settings resolution ------------------------------------------------------

def _read_config_file(path):
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_settings(parser, argv):
    """Parse ``argv`` and merge defaults < config file < flags."""
    ns = vars(parser.parse_args(argv))
    command = ns["command"]
    defaults = {k[len("_default_"):]: v for k, v in ns.items() if k.startswith("_default_")}
    sub = parser.commands[command]
    types = {a.dest: a.type for a in sub._actions if a.type is not None}
    settings = dict(defaults)
    if ns.get("config"):
        for key, raw in _read_config_file(ns["config"]).items():
            if key not in defaults:
                raise UsageError(f"unknown config key {key!r} for {command}")
            try:
                settings[key] = types[key](raw) if key in types else raw
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
    for key in defaults:
        if key in ns:
            settings[key] = ns[key]
    settings["command"] = command
    settings["verbose"] = ns.get("verbose", False)
    return settings


def _echo_value(v):
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ",".join(_echo_value(x) for x in v)
    if isinstance(v, float):
        return io.format_float(v)
    return str(v)


def write_config_echo(out, settings):
    lines = [f"# mixqrf {settings['command']}"]
    for key in sorted(settings):
        if key in ("command", "verbose"):
            continue
        lines.append(f"{key.replace('_', '-')}={_echo_value(settings[key])}")
    path = Path(out) / "config.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _require(s, *keys):
    missing = [k for k in keys if s.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " +
                         ", ".join("--" + k.replace("_", "-") for k in missing))


def _n_jobs(s):
    return -1 if s["threads"] == 0 else s["threads"]


def _taus(s):
    taus = [float(t) for t in s["tau"]]
    if any(not 0 < t < 1 for t in taus):
        raise InvalidConfigError("every tau must lie in (0, 1)")
    return taus


def _train_config(s):
    return TrainConfig(n_trees=s["n_trees"], mtry=s["mtry"],
                       min_node_size=s["min_node_size"], max_depth=s["max_depth"],
                       bootstrap_fraction=s["bootstrap_fraction"], seed=s["seed"])


def _em_config(s, tau):
    return EmConfig(tau=tau, K=s["k"], max_iter=s["max_iter"], loglik_tol=s["tol"],
                    m_step=s["m_step"], forest=_train_config(s), seed=s["seed"],
                    alpha_init=s["alpha_init"], n_jobs=_n_jobs(s))


def _mean_check_loss(y, q, tau):
    ok = np.isfinite(q)
    return float(np.mean(check_loss(y[ok] - q[ok], tau))) if ok.any() else float("nan")


# ---- preprocessing --------------------------------------------------------------

def _transform_column(values, name, kind, path, first_row):
    if kind == "log":
        bad = np.flatnonzero(~(values > 0))
        if bad.size:
            raise DataFormatError(f"{path}: row {first_row + bad[0]}, column '{name}': "
                                  "log-returns need positive values")
        return 100.0 * np.diff(np.log(values))
    return np.diff(values)


def _plan(columns, log_returns, diff):
    overlap = set(log_returns) & set(diff)
    if overlap:
        raise InvalidConfigError(f"columns both logged and differenced: {sorted(overlap)}")
    return {c: "log" for c in log_returns if c in columns} | \
        {c: "diff" for c in diff if c in columns}


def preprocess_high(series, log_returns=(), diff=(), path="high"):
    """Apply log-return and difference transforms; drops the first row when any apply."""
    columns = ["y"] + list(series.names)
    plan = _plan(columns, log_returns, diff)
    if not plan:
        return series
    y = series.y[1:] if "y" not in plan else _transform_column(series.y, "y", plan["y"], path, 2)
    X = series.X[1:].copy()
    for j, name in enumerate(series.names):
        if name in plan:
            X[:, j] = _transform_column(series.X[:, j], name, plan[name], path, 2)
    return HighFreqSeries(period=series.period[1:], index=series.index[1:], y=y, X=X,
                          names=list(series.names))


def preprocess_low(lows, log_returns=(), diff=(), path="low"):
    plan = _plan(list(lows.names), log_returns, diff)
    if not plan:
        return lows
    V = lows.values[1:].copy()
    for j, name in enumerate(lows.names):
        if name in plan:
            V[:, j] = _transform_column(lows.values[:, j], name, plan[name], path, 2)
    return LowFreqSeries(period=lows.period[1:], values=V, names=list(lows.names))


def _check_known_columns(s, high, lows):
    known = {"y", *high.names, *(lows.names if lows is not None else [])}
    unknown = (set(s["log_returns"]) | set(s["diff"])) - known
    if unknown:
        raise DataFormatError(f"transform columns not found in the data: {sorted(unknown)}")


def _load_mixed(s, high_path, low_path):
    high, _ = io.read_high_freq(high_path)
    lows = io.read_low_freq(low_path) if low_path else None
    _check_known_columns(s, high, lows)
    high = preprocess_high(high, s["log_returns"], s["diff"], high_path)
    if lows is not None:
        lows = preprocess_low(lows, s["log_returns"], s["diff"], low_path)
    return high, lows


def _midas_spec(s):
    return MidasSpec(lag_count=s["lag_count"], omega1=s["omega1"],
                     omega2_grid=DEFAULT_OMEGA2_GRID)


def _align(s, high, lows, transformer=None):
    spec = _midas_spec(s)
    return align_mixed_frequency(high, lows, spec=spec, use_pca=s["omega2"] is None,
                                 omega2=s["omega2"], contemporaneous=s["contemporaneous"],
                                 outcome_lags=s["outcome_lags"], transformer=transformer)


def _mixed_settings(s):
    keys = ("log_returns", "diff", "lag_count", "omega1", "omega2", "contemporaneous",
            "outcome_lags")
    return {k: s[k] for k in keys}


def _model_mixed(payload, table):
    tr = table.transformers.get("midas")
    payload["transformer"] = io.transformer_to_dict(tr) if tr is not None else None
    payload["feature_names"] = list(table.feature_names)


def _backtest_reports(y, preds, taus, s):
    reports = {}
    for k, tau in enumerate(taus):
        rep = backtest(y, preds[:, k], tau, n_lags=s["n_lags"]).to_dict()
        rep["passes"] = {name: bool(rep[name]["p_value"] > s["pass_level"])
                         for name in ("uc", "cc", "dq")}
        reports[io.format_float(tau)] = rep
    return reports


# ---- table helpers --------------------------------------------------------------

def _read_table_xy(path, y_col, feature_names=None, require_y=True):
    table = io.read_csv(path)
    names = feature_names if feature_names is not None else [
        h for h in table.header if h != y_col and h not in ID_COLUMNS]
    table.require(*names)
    X = table.matrix(names)
    y = table.floats(y_col) if (require_y or table.has(y_col)) else None
    row_ids = table.numbers("row_id") if table.has("row_id") else np.arange(len(table))
    for j, name in enumerate(names):
        bad = np.flatnonzero(~np.isfinite(X[:, j]))
        if bad.size:
            raise DataFormatError(f"{path}: row {bad[0] + 2}, column '{name}': non-finite value")
    return X, y, names, row_ids


# ---- commands -------------------------------------------------------------------

def cmd_simulate(s):
    out = Path(s["out"])
    if s["scenario"] not in SCENARIOS:
        raise InvalidConfigError(f"unknown scenario {s['scenario']!r}")
    sim = simulate_scenario(s["scenario"], N=s["n_units"], T_train=s["t_train"],
                            test_sizes=tuple(s["test_sizes"]), seed=s["seed"])
    times = {}
    for split, panel in (("train", sim.train), ("test", sim.test)):
        t = np.empty(panel.n_obs, dtype=np.int64)
        for i in range(panel.n_units):
            rows = np.flatnonzero(panel.unit == i)
            t[rows] = np.arange(rows.size)
        times[split] = t
        io.write_panel(out / f"{split}.csv", panel, t)
    cols = {k: [] for k in ("split", "row_id", "unit", "time", "tau", "quantile")}
    for split, panel in (("train", sim.train), ("test", sim.test)):
        for tau in _taus(s):
            q = sim.oracle(split, tau)
            cols["split"] += [split] * panel.n_obs
            cols["row_id"] += list(range(panel.n_obs))
            cols["unit"] += panel.labels[panel.unit].tolist()
            cols["time"] += times[split].tolist()
            cols["tau"] += [tau] * panel.n_obs
            cols["quantile"] += q.tolist()
    io.write_csv(out / "oracle.csv", list(cols), list(cols.values()))
    io.write_csv(out / "effects.csv", ["unit", "b"], [sim.train.labels.tolist(), sim.b])
    sc = sim.scenario
    io.dump_json(out / "report.json", {
        "command": "simulate", "scenario": sc.name, "family": sc.family,
        "sigma_b": sc.sigma_b, "n_units": sim.train.n_units,
        "n_train": sim.train.n_obs, "n_test": sim.test.n_obs})


def cmd_fit_qrf(s):
    _require(s, "data")
    taus = _taus(s)
    X, y, names, row_ids = _read_table_xy(s["data"], s["y_col"])
    forest = fit_forest(X, y, config=_train_config(s), feature_names=names,
                        n_jobs=_n_jobs(s))
    oob = forest.quantiles(X, taus, oob=True)
    out = Path(s["out"])
    io.write_predictions(out / "predictions.csv", row_ids, taus, oob)
    io.save_model(out / "model.json", "qrf", {"forest": io.forest_to_dict(forest),
                                              "taus": taus, "y_col": s["y_col"]})
    io.dump_json(out / "report.json", {
        "command": "fit-qrf", "n_obs": int(y.size), "feature_names": names,
        "oob_check_loss": {io.format_float(t): _mean_check_loss(y, oob[:, k], t)
                           for k, t in enumerate(taus)},
        "n_without_oob": int(np.sum(~forest.oob_masks.any(axis=0)))})


def _mixed_inputs(s):
    _require(s, "high")
    high, lows = _load_mixed(s, s["high"], s["low"])
    table = _align(s, high, lows)
    warmup = s["warmup"] if s["warmup"] is not None else default_warmup(table.n_rows)
    return table, warmup


def cmd_fit_midas_qrf(s):
    taus = _taus(s)
    table, warmup = _mixed_inputs(s)
    config = _train_config(s)
    preds = expanding_window_forecast(table.X, table.y, taus, warmup=warmup,
                                      config=config, refit_every=s["refit_every"],
                                      n_jobs=_n_jobs(s))
    final = fit_forest(table.X, table.y, config=config,
                       feature_names=table.feature_names, n_jobs=_n_jobs(s))
    out = Path(s["out"])
    oos = slice(warmup, None)
    io.write_predictions(out / "predictions.csv", table.index[oos], taus, preds[oos])
    io.write_csv(out / "outcomes.csv", ["row_id", "y"], [table.index, table.y])
    payload = {"forest": io.forest_to_dict(final), "taus": taus,
               "settings": _mixed_settings(s)}
    _model_mixed(payload, table)
    io.save_model(out / "model.json", "midas-qrf", payload)
    io.dump_json(out / "report.json", {
        "command": "fit-midas-qrf", "n_rows": table.n_rows, "n_dropped": table.n_dropped,
        "warmup": warmup, "feature_names": list(table.feature_names),
        "backtest": _backtest_reports(table.y[oos], preds[oos], taus, s)})


def cmd_fit_dynamic(s):
    taus = _taus(s)
    table, warmup = _mixed_inputs(s)
    config = _train_config(s)
    results = [fit_dynamic_midas_qrf(table, tau, warmup=warmup, config=config,
                                     refit_every=s["refit_every"], restarts=s["restarts"],
                                     n_jobs=_n_jobs(s)) for tau in taus]
    preds = np.column_stack([r.predictions for r in results])
    out = Path(s["out"])
    oos = slice(warmup, None)
    io.write_predictions(out / "predictions.csv", table.index[oos], taus, preds[oos])
    io.write_csv(out / "outcomes.csv", ["row_id", "y"], [table.index, table.y])
    payload = {"taus": taus, "settings": _mixed_settings(s),
               "last_row_id": int(table.index[-1]),
               "per_tau": [{"tau": tau, "forest": io.forest_to_dict(r.final_forest),
                            "last_prediction": float(r.predictions[-1])}
                           for tau, r in zip(taus, results)]}
    _model_mixed(payload, table)
    io.save_model(out / "model.json", "dynamic-midas-qrf", payload)
    io.dump_json(out / "report.json", {
        "command": "fit-dynamic", "n_rows": table.n_rows, "n_dropped": table.n_dropped,
        "warmup": warmup, "feature_names": list(table.feature_names),
        "caviar": {io.format_float(tau): asdict(r.caviar.params) | {"loss": r.caviar.loss}
                   for tau, r in zip(taus, results)},
        "n_refits": len(results[0].refits) - 1,
        "backtest": _backtest_reports(table.y[oos], preds[oos], taus, s)})


def _fmqrf_payload(model):
    st = model.state
    return {"tau": st.tau, "alpha": st.alpha, "pi": st.pi, "sigma": st.sigma,
            "offset": st.offset, "assignment": model.assignment,
            "labels": [str(v) for v in model.labels.tolist()],
            "feature_names": list(model.feature_names), "trace": list(model.trace),
            "converged": bool(model.converged), "n_iter": int(model.n_iter),
            "forest": io.forest_to_dict(st.forest)}


def _fmqrf_from_payload(d):
    forest = io.forest_from_dict(d["forest"])
    alpha = np.asarray(d["alpha"], dtype=float)
    state = MixtureState(tau=float(d["tau"]), alpha=alpha, pi=np.asarray(d["pi"], dtype=float),
                         sigma=float(d["sigma"]), W=np.empty((0, alpha.size)),
                         g=np.empty(0), forest=forest, offset=float(d["offset"]))
    return FmQrfModel(state=state, assignment=np.asarray(d["assignment"], dtype=np.int64),
                      trace=list(d["trace"]), config=EmConfig(tau=float(d["tau"]), K=alpha.size),
                      labels=np.asarray(d["labels"], dtype=object),
                      feature_names=list(d["feature_names"]),
                      converged=bool(d["converged"]), n_iter=int(d["n_iter"]))


def cmd_fit_fmqrf(s):
    _require(s, "panel")
    taus = _taus(s)
    panel, _ = io.read_panel(s["panel"])
    models = [fit_fm_qrf(panel, _em_config(s, tau)) for tau in taus]
    labels = panel.labels[panel.unit]
    preds = np.column_stack([predict_fm_qrf(m, panel.X, labels) for m in models])
    out = Path(s["out"])
    io.write_predictions(out / "predictions.csv", np.arange(panel.n_obs), taus, preds)
    io.save_model(out / "model.json", "fmqrf",
                  {"taus": taus, "per_tau": [_fmqrf_payload(m) for m in models]})
    report = {}
    for k, (tau, m) in enumerate(zip(taus, models)):
        st = m.state
        report[io.format_float(tau)] = {
            "alpha": st.alpha, "pi": st.pi, "sigma": st.sigma, "offset": st.offset,
            "loglik": m.loglik, "trace": list(m.trace), "converged": bool(m.converged),
            "n_iter": int(m.n_iter),
            "assignment": {str(lab): int(c) for lab, c in zip(m.labels.tolist(), m.assignment)},
            "check_loss": _mean_check_loss(panel.y, preds[:, k], tau)}
    io.dump_json(out / "report.json", {"command": "fit-fmqrf", "n_units": panel.n_units,
                                       "n_obs": panel.n_obs, "fits": report})


def _predict_mixed(kind, payload, s):
    st = dict(payload["settings"])
    st.setdefault("warmup", None)
    high, _ = io.read_high_freq(s["data"])
    lows = None
    tr_state = payload["transformer"]
    if s["low"]:
        lows = io.read_low_freq(s["low"])
    _check_known_columns(st, high, lows)
    high = preprocess_high(high, st["log_returns"], st["diff"], s["data"])
    if lows is not None:
        lows = preprocess_low(lows, st["log_returns"], st["diff"], s["low"])
    transformer = io.transformer_from_dict(tr_state, lows) if tr_state else None
    table = _align(st, high, transformer.lows_ if transformer else None, transformer)
    if list(table.feature_names) != payload["feature_names"]:
        raise DataFormatError(f"{s['data']}: columns do not match the model")
    taus = payload["taus"]
    if kind == "midas-qrf":
        forest = io.forest_from_dict(payload["forest"])
        return table, np.arange(table.n_rows), forest.quantiles(table.X, taus)
    new = np.flatnonzero(table.index > payload["last_row_id"])
    if new.size == 0:
        raise DataFormatError(f"{s['data']}: no rows after the training sample "
                              f"(row_id > {payload['last_row_id']})")
    preds = np.empty((new.size, len(taus)))
    for k, entry in enumerate(payload["per_tau"]):
        forest = io.forest_from_dict(entry["forest"])
        prev = entry["last_prediction"]
        for i, r in enumerate(new):
            row = np.append(table.X[r], prev)[None, :]
            preds[i, k] = prev = forest.quantiles(row, [taus[k]])[0, 0]
    return table, new, preds


def cmd_predict(s):
    _require(s, "model", "data")
    kind, payload = io.load_model(s["model"])
    taus = payload["taus"]
    y = None
    if kind == "qrf":
        forest = io.forest_from_dict(payload["forest"])
        X, y, _, row_ids = _read_table_xy(s["data"], s["y_col"], forest.feature_names,
                                          require_y=False)
        preds = forest.quantiles(X, taus)
    elif kind in ("midas-qrf", "dynamic-midas-qrf"):
        table, rows, preds = _predict_mixed(kind, payload, s)
        row_ids, y = table.index[rows], table.y[rows]
    elif kind == "fmqrf":
        panel, _ = io.read_panel(s["data"], require_y=False)
        models = [_fmqrf_from_payload(d) for d in payload["per_tau"]]
        cols = models[0].feature_names
        missing = [c for c in cols if c not in panel.feature_names]
        if missing:
            raise DataFormatError(f"{s['data']}: missing column(s) {', '.join(missing)}")
        X = panel.X[:, [panel.feature_names.index(c) for c in cols]]
        labels = panel.labels[panel.unit]
        preds = np.column_stack([predict_fm_qrf(m, X, labels) for m in models])
        row_ids = np.arange(panel.n_obs)
        if io.read_csv(s["data"]).has(s["y_col"]):
            y = panel.y
    else:
        raise DataFormatError(f"{s['model']}: unknown model kind {kind!r}")
    out = Path(s["out"])
    io.write_predictions(out / "predictions.csv", row_ids, taus, preds)
    report = {"command": "predict", "kind": kind, "n_rows": int(len(row_ids))}
    if y is not None:
        report["check_loss"] = {io.format_float(t): _mean_check_loss(y, preds[:, k], t)
                                for k, t in enumerate(taus)}
    io.dump_json(out / "report.json", report)


def cmd_backtest(s):
    _require(s, "predictions", "outcomes")
    by_tau = io.read_predictions(s["predictions"])
    table = io.read_csv(s["outcomes"])
    y_all = table.floats(s["y_col"])
    ids = table.numbers("row_id") if table.has("row_id") else np.arange(len(table))
    position = {int(r): i for i, r in enumerate(ids)}
    taus = _taus(s) if s["tau"] else sorted(by_tau)
    reports = {}
    for tau in taus:
        match = [t for t in by_tau if abs(t - tau) < 1e-12]
        if not match:
            raise DataFormatError(f"{s['predictions']}: no predictions for tau={tau}")
        rid, q = by_tau[match[0]]
        missing = [int(r) for r in rid if int(r) not in position]
        if missing:
            raise DataFormatError(f"{s['outcomes']}: no outcome for row_id {missing[0]}")
        y = y_all[[position[int(r)] for r in rid]]
        rep = backtest(y, q, tau, n_lags=s["n_lags"]).to_dict()
        rep["passes"] = {name: bool(rep[name]["p_value"] > s["pass_level"])
                         for name in ("uc", "cc", "dq")}
        reports[io.format_float(tau)] = rep
    io.dump_json(Path(s["out"]) / "report.json",
                 {"command": "backtest", "pass_level": s["pass_level"], "backtest": reports})


def cmd_importance(s):
    _require(s, "data")
    taus = _taus(s)
    X, y, names, row_ids = _read_table_xy(s["data"], s["y_col"])
    forest = fit_forest(X, y, config=_train_config(s), feature_names=names,
                        n_jobs=_n_jobs(s))
    cols = {k: [] for k in ("tau", "feature", "importance", "std", "rank")}
    report = {}
    for tau in taus:
        res = permutation_importance(forest, X, y, tau=tau, n_repeats=s["repeats"],
                                     seed=s["seed"])
        rank = np.empty(len(names), dtype=np.int64)
        rank[res.ranking()] = np.arange(1, len(names) + 1)
        for j, name in enumerate(names):
            cols["tau"].append(tau)
            cols["feature"].append(name)
            cols["importance"].append(res.importances[j])
            cols["std"].append(res.importances_std[j])
            cols["rank"].append(int(rank[j]))
        report[io.format_float(tau)] = {"baseline_ssr": res.baseline_ssr, "n_oob": res.n_oob,
                                        "ranking": [names[j] for j in res.ranking()]}
    out = Path(s["out"])
    io.write_csv(out / "importance.csv", list(cols), list(cols.values()))
    io.write_predictions(out / "predictions.csv", row_ids, taus,
                         forest.quantiles(X, taus, oob=True))
    io.save_model(out / "model.json", "qrf", {"forest": io.forest_to_dict(forest),
                                              "taus": taus, "y_col": s["y_col"]})
    io.dump_json(out / "report.json", {"command": "importance", "importance": report})


def cmd_bootstrap(s):
    _require(s, "panel", "query")
    taus = _taus(s)
    panel, _ = io.read_panel(s["panel"])
    Xq, _, _, row_ids = _read_table_xy(s["query"], "y", panel.feature_names, require_y=False)
    cols = {k: [] for k in ("row_id", "tau", "mean", "se")}
    preds, report = [], {}
    for tau in taus:
        res = bootstrap_se(panel, _em_config(s, tau), s["replications"], Xq, seed=s["seed"])
        cols["row_id"] += [int(r) for r in row_ids]
        cols["tau"] += [tau] * len(row_ids)
        cols["mean"] += res.mean.tolist()
        cols["se"] += res.se.tolist()
        preds.append(res.mean)
        report[io.format_float(tau)] = {"replications": s["replications"],
                                        "n_failed": res.n_failed,
                                        "mean_se": float(np.mean(res.se))}
    out = Path(s["out"])
    io.write_csv(out / "bootstrap.csv", list(cols), list(cols.values()))
    io.write_predictions(out / "predictions.csv", row_ids, taus, np.column_stack(preds))
    io.dump_json(out / "report.json", {"command": "bootstrap", "bootstrap": report})


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-qrf": cmd_fit_qrf,
    "fit-midas-qrf": cmd_fit_midas_qrf,
    "fit-dynamic": cmd_fit_dynamic,
    "fit-fmqrf": cmd_fit_fmqrf,
    "predict": cmd_predict,
    "backtest": cmd_backtest,
    "importance": cmd_importance,
    "bootstrap": cmd_bootstrap,
}


def main(argv=None):
    parser = build_parser()
    try:
        settings = resolve_settings(parser, sys.argv[1:] if argv is None else argv)
        logging.basicConfig(level=logging.INFO if settings["verbose"] else logging.WARNING,
                            format="%(levelname)s %(message)s")
        write_config_echo(settings["out"], settings)
        COMMANDS[settings["command"]](settings)
    except (UsageError, InvalidConfigError) as exc:
        print(f"mixqrf: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MixQRFError, OSError) as exc:
        print(f"mixqrf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

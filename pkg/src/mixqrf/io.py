"""CSV ingestion and export, and versioned JSON model files."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .exceptions import DataFormatError
from .fmqrf import PanelDataset
from .forest import QuantileForest, RegressionTree, TrainConfig
from .midas import HighFreqSeries, LowFreqSeries, MidasComponentTransformer

__all__ = [
    "MODEL_MAGIC",
    "MODEL_FORMAT_VERSION",
    "CsvTable",
    "read_csv",
    "write_csv",
    "format_float",
    "read_high_freq",
    "read_low_freq",
    "read_panel",
    "write_panel",
    "write_predictions",
    "read_predictions",
    "forest_to_dict",
    "forest_from_dict",
    "transformer_to_dict",
    "transformer_from_dict",
    "save_model",
    "load_model",
]

MODEL_MAGIC = "mixqrf-model"
MODEL_FORMAT_VERSION = "1.0.0"


def format_float(x):
    """Shortest text that reads back as the same double (at most 17 significant digits)."""
    return repr(float(x))


class CsvTable:
    """Header plus string cells, with typed column access."""

    def __init__(self, path, header, rows):
        self.path = str(path)
        self.header = header
        self.rows = rows

    def __len__(self):
        return len(self.rows)

    def has(self, name):
        return name in self.header

    def require(self, *names):
        missing = [n for n in names if n not in self.header]
        if missing:
            raise DataFormatError(f"{self.path}: missing column(s) {', '.join(missing)}")

    def strings(self, name):
        self.require(name)
        j = self.header.index(name)
        return np.array([r[j] for r in self.rows], dtype=object)

    def floats(self, name):
        self.require(name)
        j = self.header.index(name)
        out = np.empty(len(self.rows))
        for i, row in enumerate(self.rows):
            try:
                out[i] = float(row[j])
            except ValueError:
                raise DataFormatError(
                    f"{self.path}: row {i + 2}, column '{name}': "
                    f"cannot parse {row[j]!r} as a number") from None
        return out

    def numbers(self, name):
        """Integer column if every cell is an integer literal, else float."""
        vals = self.floats(name)
        if np.all(np.isfinite(vals)) and np.all(vals == np.round(vals)):
            return vals.astype(np.int64)
        return vals

    def matrix(self, names):
        return np.column_stack([self.floats(n) for n in names]) if names else \
            np.empty((len(self.rows), 0))


def read_csv(path):
    """Read a headed UTF-8 CSV; ragged rows are reported with their line number."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataFormatError(f"{path}: empty file") from None
            if len(set(header)) != len(header) or any(not h for h in header):
                raise DataFormatError(f"{path}: header has empty or duplicate names")
            rows = []
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataFormatError(
                        f"{path}: row {line} has {len(row)} fields, expected {len(header)}")
                rows.append([c.strip() for c in row])
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    return CsvTable(path, header, rows)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, columns):
    """Write equal-length columns; floats use 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(columns[0]) if columns else 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([_cell(c[i]) for c in columns])


def _check_increasing_dates(table, dates):
    for i in range(1, dates.size):
        if dates[i] <= dates[i - 1]:
            raise DataFormatError(
                f"{table.path}: row {i + 2}, column 'date': dates must increase strictly")


def read_high_freq(path, y_col="y"):
    """High-frequency CSV ``date, period, y, <covariates...>``.

    Returns ``(HighFreqSeries, dates)``; the series index is the data-row
    number so aligned rows keep a stable ``row_id``.
    """
    table = read_csv(path)
    table.require("date", "period", y_col)
    dates = table.strings("date")
    _check_increasing_dates(table, dates)
    names = [h for h in table.header if h not in ("date", "period", y_col)]
    series = HighFreqSeries(period=table.numbers("period"), index=np.arange(len(table)),
                            y=table.floats(y_col), X=table.matrix(names), names=names)
    return series, dates


def read_low_freq(path):
    """Low-frequency CSV ``period, <Z columns...>``."""
    table = read_csv(path)
    table.require("period")
    names = [h for h in table.header if h != "period"]
    values = table.matrix(names)
    bad = ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataFormatError(f"{table.path}: row {i + 2}, column '{names[j]}': non-finite value")
    return LowFreqSeries(period=table.numbers("period"), values=values, names=names)


def read_panel(path, y_col="y", require_y=True):
    """Panel CSV ``unit, time, y, <x columns...>``.

    Unit labels are kept as strings. Returns ``(PanelDataset, time)``; when
    the outcome column is absent and ``require_y`` is False, ``y`` is zero.
    """
    table = read_csv(path)
    table.require("unit", "time")
    if require_y:
        table.require(y_col)
    names = [h for h in table.header if h not in ("unit", "time", y_col)]
    X = table.matrix(names)
    y = table.floats(y_col) if table.has(y_col) else np.zeros(len(table))
    for name, col in [(y_col, y)] + [(n, X[:, j]) for j, n in enumerate(names)]:
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            raise DataFormatError(f"{table.path}: row {bad[0] + 2}, column '{name}': non-finite value")
    units = table.strings("unit").astype(str)
    labels, codes = np.unique(units, return_inverse=True)
    panel = PanelDataset(unit=codes, y=y, X=X, labels=labels, feature_names=names)
    return panel, table.numbers("time")


def write_panel(path, panel, time=None):
    if time is None:
        time = np.concatenate([np.arange(c) for c in panel.sizes()])
        order = np.argsort(panel.unit, kind="stable")
        t = np.empty_like(time)
        t[order] = time
        time = t
    cols = [panel.labels[panel.unit], time, panel.y] + list(panel.X.T)
    write_csv(path, ["unit", "time", "y"] + list(panel.feature_names), cols)


def write_predictions(path, row_ids, taus, predictions):
    """Long-format predictions ``row_id, tau, prediction``.

    ``predictions`` has shape ``(n_rows, n_taus)``.
    """
    predictions = np.asarray(predictions, dtype=float).reshape(len(row_ids), len(taus))
    rid, tt, pp = [], [], []
    for k, tau in enumerate(taus):
        rid.extend(int(r) for r in row_ids)
        tt.extend([float(tau)] * len(row_ids))
        pp.extend(predictions[:, k].tolist())
    write_csv(path, ["row_id", "tau", "prediction"], [rid, tt, pp])


def read_predictions(path):
    """Return ``{tau: (row_ids, predictions)}``."""
    table = read_csv(path)
    table.require("row_id", "tau", "prediction")
    rid = table.numbers("row_id")
    tau = table.floats("tau")
    pred = table.floats("prediction")
    out = {}
    for t in np.unique(tau):
        sel = tau == t
        out[float(t)] = (rid[sel], pred[sel])
    return out


# ---- model files --------------------------------------------------------------

def _arr(a):
    return np.asarray(a).tolist()


def forest_to_dict(forest):
    trees = [{
        "feature": _arr(t.feature), "threshold": _arr(t.threshold),
        "left": _arr(t.left), "right": _arr(t.right),
        "leaf_start": _arr(t.leaf_start), "leaf_end": _arr(t.leaf_end),
        "samples": _arr(t.samples), "sample_weight": _arr(t.sample_weight),
    } for t in forest.trees]
    oob = ["".join("1" if v else "0" for v in row) for row in forest.oob_masks]
    return {"config": asdict(forest.config), "feature_names": list(forest.feature_names),
            "train_outcomes": _arr(forest.train_outcomes),
            "train_weights": _arr(forest.train_weights), "oob": oob, "trees": trees}


def forest_from_dict(d):
    trees = [RegressionTree(
        feature=np.asarray(t["feature"], dtype=np.int64),
        threshold=np.asarray(t["threshold"], dtype=float),
        left=np.asarray(t["left"], dtype=np.int64),
        right=np.asarray(t["right"], dtype=np.int64),
        leaf_start=np.asarray(t["leaf_start"], dtype=np.int64),
        leaf_end=np.asarray(t["leaf_end"], dtype=np.int64),
        samples=np.asarray(t["samples"], dtype=np.int64),
        sample_weight=np.asarray(t["sample_weight"], dtype=float)) for t in d["trees"]]
    oob = np.array([[c == "1" for c in row] for row in d["oob"]], dtype=bool)
    oob = oob.reshape(len(trees), len(d["train_outcomes"]))
    return QuantileForest(trees=trees,
                          train_outcomes=np.asarray(d["train_outcomes"], dtype=float),
                          train_weights=np.asarray(d["train_weights"], dtype=float),
                          oob_masks=oob, config=TrainConfig(**d["config"]),
                          feature_names=list(d["feature_names"]))


def transformer_to_dict(tr):
    lows = tr.lows_
    return {"params": {**tr.get_params(), "omega2_grid": list(tr.omega2_grid)},
            "lows": {"period": _arr(lows.period), "values": _arr(lows.values),
                     "names": list(lows.names)},
            "loadings": [_arr(v) for v in tr.loadings_],
            "centers": [_arr(v) for v in tr.centers_],
            "feature_names_out": list(tr.feature_names_out_)}


def transformer_from_dict(d, lows=None):
    """Rebuild a fitted transformer; ``lows`` replaces the stored low-frequency data."""
    params = dict(d["params"])
    params["omega2_grid"] = tuple(params["omega2_grid"])
    tr = MidasComponentTransformer(**params)
    stored = d["lows"]
    tr.lows_ = lows if lows is not None else LowFreqSeries(
        period=np.asarray(stored["period"]), values=np.asarray(stored["values"], dtype=float),
        names=list(stored["names"]))
    tr.loadings_ = [np.asarray(v, dtype=float) for v in d["loadings"]]
    tr.centers_ = [np.asarray(v, dtype=float) for v in d["centers"]]
    tr.feature_names_out_ = list(d["feature_names_out"])
    return tr


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dump_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=1, sort_keys=True, default=_json_default,
                      allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")


def save_model(path, kind, payload):
    dump_json(path, {"magic": MODEL_MAGIC, "format_version": MODEL_FORMAT_VERSION,
                     "kind": kind, "payload": payload})


def load_model(path, kind=None):
    """Read a model file, checking the magic header and major version."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a readable model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("magic") != MODEL_MAGIC:
        raise DataFormatError(f"{path}: missing model header")
    major = str(doc.get("format_version", "")).split(".")[0]
    if major != MODEL_FORMAT_VERSION.split(".")[0]:
        raise DataFormatError(f"{path}: unsupported model format {doc.get('format_version')}")
    if kind is not None and doc.get("kind") not in (kind if isinstance(kind, tuple) else (kind,)):
        raise DataFormatError(f"{path}: expected a {kind} model, found {doc.get('kind')}")
    return doc["kind"], doc["payload"]


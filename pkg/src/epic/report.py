"""Run-report serialization and CSV series export.

Reports serialize as canonical JSON (sorted keys, fixed separators, no
NaN) so a fixed run re-serializes byte-identically. Wall-clock timings
live in a dedicated top-level "timings" section that byte-stability
checks exclude.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .errors import EpicError

SCHEMA_VERSION = 1


class UnknownSeries(EpicError):
    def __init__(self, name, available):
        super().__init__(
            f"unknown series {name!r}; available: {', '.join(sorted(available))}"
        )
        self.available = tuple(sorted(available))


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays; NaN and Inf become null."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(doc) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def strip_timings(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != "timings"}


def _primary_run(report: dict) -> dict | None:
    runs = report.get("runs", {})
    return runs.get("defended") or runs.get("undefended") or runs.get("clean")


def available_series(report: dict) -> list[str]:
    names = []
    runs = report.get("runs", {})
    primary = _primary_run(report)
    if primary:
        for key in ("loss", "accuracy", "lr", "active_count"):
            if key in primary:
                names.append(key)
    for run_name, run in runs.items():
        for key in ("loss", "accuracy", "lr", "active_count"):
            if key in run:
                names.append(f"{run_name}.{key}")
    if primary:
        for r, _ in enumerate(primary.get("rounds", [])):
            names.append(f"cluster_hist_round_{r + 1}")
        if primary.get("rounds"):
            names.append("drops")
    trace = report.get("cosine_trace")
    if trace:
        names.append("cosine_poison_poison")
        names.append("cosine_poison_target")
    bound = report.get("decay_bound")
    if bound:
        names.append("decay_bound")
    return names


def _epoch_series_rows(values, header):
    rows = [["epoch", header]]
    for e, v in enumerate(values):
        rows.append([e, "" if v is None else v])
    return rows


def export_series(report: dict, name: str) -> str:
    """Render one report series as RFC-4180-style CSV text."""
    names = available_series(report)
    if name not in names:
        raise UnknownSeries(name, names)
    runs = report.get("runs", {})
    primary = _primary_run(report)
    if name in ("loss", "accuracy", "lr", "active_count"):
        rows = _epoch_series_rows(primary[name], name)
    elif "." in name and name.split(".", 1)[0] in runs:
        run_name, key = name.split(".", 1)
        rows = _epoch_series_rows(runs[run_name][key], key)
    elif name.startswith("cluster_hist_round_"):
        r = int(name.rsplit("_", 1)[1]) - 1
        hist = report["cluster_histograms"][r]["histogram"]
        first = next(iter(hist.values())) if hist else {"clean": 0, "poison": 0}
        cols = sorted(first.keys())
        rows = [["size"] + cols]
        for size in sorted(hist, key=int):
            rows.append([int(size)] + [hist[size][c] for c in cols])
    elif name == "drops":
        rows = [["epoch", "index", "class", "medoid_rank"]]
        for rnd in primary.get("rounds", []):
            for cr in rnd["classes"]:
                ranks = {m: r for r, m in enumerate(cr["medoids"])}
                for idx in cr["dropped"]:
                    rows.append([rnd["epoch"], idx, cr["label"], ranks[idx]])
    elif name == "cosine_poison_poison":
        rows = _epoch_series_rows(report["cosine_trace"]["poison_poison"], "cosine")
    elif name == "cosine_poison_target":
        rows = _epoch_series_rows(report["cosine_trace"]["poison_target"], "cosine")
    elif name == "decay_bound":
        bound = report["decay_bound"]
        rows = [["t", "loss", "bound", "holds"]]
        for t, (loss, b, h) in enumerate(
            zip(bound["losses"], bound["bounds"], bound["holds"])
        ):
            rows.append([t, loss, b, int(h)])
    else:  # pragma: no cover - guarded by available_series
        raise UnknownSeries(name, names)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()

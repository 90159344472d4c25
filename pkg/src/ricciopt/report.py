"""Run report container and its JSON / CSV / plot-data writers.

JSON output is deterministic: keys are sorted, floats use ``repr`` and
non-finite numbers become ``null`` with their location listed under
``"nonfinite"``.  Wall-clock timings live outside the JSON document in
serial mode so that two identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

SERIES_COLUMNS = (
    "step", "loss", "V", "eta", "eta_c", "ric_l2", "grad_ric_lp",
    "b0", "b1", "betti_sum", "bound_rhs", "bound_ok", "min_g", "max_g", "edges", "L_lip",
)
_INT_COLUMNS = {"step", "b0", "b1", "betti_sum", "bound_ok", "edges"}


@dataclass
class RunReport:
    """Everything a run produced.

    ``series`` maps each name in :data:`SERIES_COLUMNS` to a list with one
    entry per recorded state (initial state plus one per step).
    """

    spec: dict = dc_field(default_factory=dict)
    series: dict = dc_field(default_factory=lambda: {c: [] for c in SERIES_COLUMNS})
    events: list = dc_field(default_factory=list)
    diagnostics: dict = dc_field(default_factory=dict)
    totals: dict = dc_field(default_factory=dict)
    wall_time: list = dc_field(default_factory=list)
    status: str = "running"

    def append(self, row: dict, seconds: float = 0.0):
        for c in SERIES_COLUMNS:
            self.series[c].append(row[c])
        self.wall_time.append(float(seconds))

    def __len__(self):
        return len(self.series["step"])

    def column(self, name):
        return np.asarray(self.series[name], dtype=float)

    def to_dict(self, include_timing=True):
        d = {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec,
            "status": self.status,
            "series": {c: list(self.series[c]) for c in SERIES_COLUMNS},
            "events": list(self.events),
            "diagnostics": dict(self.diagnostics),
            "totals": dict(self.totals),
        }
        if include_timing:
            d["wall_time"] = list(self.wall_time)
        return d


def sanitize(obj, path="$", flags=None):
    """JSON-safe copy of ``obj``; paths of non-finite numbers are appended to ``flags``."""
    flags = [] if flags is None else flags
    if isinstance(obj, dict):
        return {str(k): sanitize(v, f"{path}.{k}", flags) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v, f"{path}[{i}]", flags) for i, v in enumerate(obj)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            flags.append(path)
            return None
        return x
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist(), path, flags)
    return obj


def to_json(report: RunReport, include_timing=True):
    """Deterministic JSON text of ``report``."""
    flags = []
    body = sanitize(report.to_dict(include_timing), "$", flags)
    body["nonfinite"] = flags
    return json.dumps(body, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _fmt(col, v):
    if col in _INT_COLUMNS:
        return str(int(v))
    return repr(float(v))


def write_csv(report: RunReport, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SERIES_COLUMNS)
        for k in range(len(report)):
            wr.writerow([_fmt(c, report.series[c][k]) for c in SERIES_COLUMNS])


def write_plotdata(report: RunReport, path):
    lines = ["# " + " ".join(SERIES_COLUMNS)]
    for k in range(len(report)):
        lines.append(" ".join(_fmt(c, report.series[c][k]) for c in SERIES_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def emit_report(report: RunReport, out_dir, formats=("json", "csv", "plotdata"), serial=True, stem="report"):
    """Write the requested formats into ``out_dir``; returns the written paths.

    In serial mode the per-step wall times go to ``<stem>.timing.json``
    instead of the main JSON document.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    try:
        if "json" in formats:
            p = out / f"{stem}.json"
            p.write_text(to_json(report, include_timing=not serial))
            written.append(p)
            if serial:
                t = out / f"{stem}.timing.json"
                t.write_text(json.dumps({"wall_time": report.wall_time}, indent=1) + "\n")
                written.append(t)
        if "csv" in formats:
            p = out / f"{stem}.csv"
            write_csv(report, p)
            written.append(p)
        if "plotdata" in formats:
            p = out / f"{stem}.dat"
            write_plotdata(report, p)
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write report under {out}: {exc}") from exc
    return written


_PATH_TOKEN = re.compile(r"\.([^.\[]+)|\[(\d+)\]")


def _restore_nonfinite(data, path):
    """Put ``nan`` back at a ``$.key[3].other`` location listed under ``nonfinite``."""
    keys = [k if k else int(i) for k, i in _PATH_TOKEN.findall(path[1:])]
    node = data
    for k in keys[:-1]:
        node = node[k]
    node[keys[-1]] = math.nan


def load_report(path):
    """Rebuild a :class:`RunReport` from its JSON file.

    Values listed under ``"nonfinite"`` come back as ``nan`` (the original
    infinity sign is not kept).
    """
    try:
        data = json.loads(Path(path).read_text())
        for loc in data.get("nonfinite", []):
            _restore_nonfinite(data, loc)
    except (OSError, ValueError, KeyError, IndexError, TypeError) as exc:
        raise OSError(f"cannot read report {path}: {exc}") from exc
    rep = RunReport(spec=data.get("spec", {}), events=data.get("events", []),
                    diagnostics=data.get("diagnostics", {}), totals=data.get("totals", {}),
                    status=data.get("status", "unknown"))
    series = data.get("series", {})
    rep.series = {c: [math.nan if v is None else v for v in series.get(c, [])] for c in SERIES_COLUMNS}
    rep.wall_time = list(data.get("wall_time", [0.0] * len(rep.series["step"])))
    return rep

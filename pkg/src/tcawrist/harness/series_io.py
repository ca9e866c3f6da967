"""CSV serialisation of trajectory logs."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from ..control.loop import TrajectoryLog
from ..errors import SchemaError

__all__ = ["CSV_HEADER", "series_to_csv", "write_series", "read_series"]

CSV_HEADER = (
    "t", "theta_ref_deg", "phi_ref_deg", "theta_deg", "phi_deg",
    "L1_mm", "L2_mm", "L3_mm", "T1_C", "T2_C", "T3_C", "P1_W", "P2_W", "P3_W",
)


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def series_to_csv(series: TrajectoryLog) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    table = np.column_stack([
        series.t,
        np.degrees(series.ref),
        np.degrees(series.pose),
        series.lengths * 1e3,
        series.temperatures,
        series.powers,
    ]) if len(series) else np.zeros((0, 14))
    for row in table:
        buf.write(",".join(_fmt(float(v)) for v in row) + "\n")
    return buf.getvalue()


def write_series(series: TrajectoryLog, path) -> Path:
    path = Path(path)
    path.write_text(series_to_csv(series), newline="\n")
    return path


def read_series(path) -> TrajectoryLog:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, expected a header")
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
        idx = [header.index(c) for c in CSV_HEADER]
        rows = []
        for n, rec in enumerate(reader, 2):
            if not rec:
                continue
            try:
                rows.append([float(rec[i]) for i in idx])
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}:{n}: malformed row") from exc
    if not rows:
        return TrajectoryLog.empty()
    a = np.array(rows)
    return TrajectoryLog(
        t=a[:, 0],
        ref=np.radians(a[:, 1:3]),
        pose=np.radians(a[:, 3:5]),
        lengths=a[:, 5:8] * 1e-3,
        temperatures=a[:, 8:11],
        powers=a[:, 11:14],
    )

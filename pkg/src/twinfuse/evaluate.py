"""Dimensional measurements on reconstructed clouds and error tables.

The table arithmetic mirrors the reference format: millimeter distances
rounded to whole numbers (round-half-even) and percent error to two
decimals. Extents use the 1st/99th percentiles instead of min/max so a
few surviving outliers cannot corrupt a row.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PointCloud

_AXES = {"x": 0, "y": 1, "z": 2}
MIN_ROI_POINTS = 100


class EvaluationError(Exception):
    pass


class InsufficientPoints(EvaluationError):
    pass


@dataclass(frozen=True)
class MeasurementSpec:
    name: str
    axis: str
    roi_min: tuple
    roi_max: tuple
    truth: float        # meters

    def __post_init__(self):
        if self.axis not in _AXES:
            raise EvaluationError(f"axis must be one of x/y/z, got {self.axis}")
        lo = np.asarray(self.roi_min, dtype=float)
        hi = np.asarray(self.roi_max, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(lo < hi):
            raise EvaluationError("roi must be a valid min<max box")
        if self.truth <= 0:
            raise EvaluationError("truth must be positive")
        object.__setattr__(self, "roi_min", tuple(float(v) for v in lo))
        object.__setattr__(self, "roi_max", tuple(float(v) for v in hi))


@dataclass(frozen=True)
class ErrorRow:
    name: str
    truth_mm: int
    estimate_mm: int
    error_mm: int
    percent_error: float


def measurement_from_dict(d) -> MeasurementSpec:
    return MeasurementSpec(
        d["name"], d["axis"], tuple(d["roi"][0]), tuple(d["roi"][1]),
        float(d["truth"]),
    )


def load_measurements(path):
    return [measurement_from_dict(d) for d in json.loads(Path(path).read_text())]


def measure_extent(cloud: PointCloud, spec: MeasurementSpec) -> float:
    """Robust extent (p99 - p1) of the axis coordinate inside the ROI."""
    lo = np.asarray(spec.roi_min)
    hi = np.asarray(spec.roi_max)
    pts = cloud.points
    mask = np.all((pts >= lo) & (pts <= hi), axis=1)
    inside = pts[mask, _AXES[spec.axis]]
    if len(inside) < MIN_ROI_POINTS:
        raise InsufficientPoints(
            f"{spec.name}: {len(inside)} points in ROI, need {MIN_ROI_POINTS}"
        )
    return float(np.percentile(inside, 99) - np.percentile(inside, 1))


def error_row(name: str, truth_mm: float, estimate_mm: float) -> ErrorRow:
    """Table arithmetic. Rounding is round-half-even at table precision."""
    if truth_mm <= 0:
        raise EvaluationError("truth must be positive")
    truth_i = round(truth_mm)
    est_i = round(estimate_mm)
    err = abs(est_i - truth_i)
    pct = round(100.0 * err / truth_i, 2)
    return ErrorRow(name, truth_i, est_i, err, pct)


def rows_from_cloud(cloud: PointCloud, specs) -> list:
    return [
        error_row(s.name, s.truth * 1000.0,
                  measure_extent(cloud, s) * 1000.0)
        for s in specs
    ]


def emit_report(rows, format: str = "text-table") -> bytes:
    """Serialize rows; byte output is deterministic for given input."""
    if format == "csv":
        out = io.StringIO()
        out.write("name,truth_mm,estimate_mm,error_mm,percent_error\n")
        for r in rows:
            out.write(
                f"{r.name},{r.truth_mm},{r.estimate_mm},"
                f"{r.error_mm},{r.percent_error:.2f}\n"
            )
        return out.getvalue().encode()
    if format == "json":
        return json.dumps(
            [
                {"name": r.name, "truth_mm": r.truth_mm,
                 "estimate_mm": r.estimate_mm, "error_mm": r.error_mm,
                 "percent_error": r.percent_error}
                for r in rows
            ],
            indent=1,
        ).encode()
    if format == "text-table":
        header = (
            f"{'Area of Interest':<20}{'Measured':>10}{'Distance':>10}"
            f"{'Error':>8}{'% Error':>9}"
        )
        lines = [header, "-" * len(header)]
        for r in rows:
            lines.append(
                f"{r.name:<20}{r.truth_mm:>7} mm{r.estimate_mm:>7} mm"
                f"{r.error_mm:>5} mm{r.percent_error:>8.2f}%"
            )
        return ("\n".join(lines) + "\n").encode()
    raise EvaluationError(f"unknown report format: {format}")


def rows_from_json(data: bytes):
    return [
        ErrorRow(d["name"], d["truth_mm"], d["estimate_mm"], d["error_mm"],
                 d["percent_error"])
        for d in json.loads(data.decode())
    ]

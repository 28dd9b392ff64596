"""Prediction accuracy against ground truth and a latency-lagged baseline.

For each scheduled prediction the ground truth is the trace sample at the
target time, and the baseline is the sample one look-ahead earlier, i.e. the
pose a renderer without prediction would show after ``lat_ms`` of
motion-to-photon delay. Both are scored at the same target timestamps.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from . import quat
from .errors import TraceTooShortError
from .predictor import ModelPair, PredictionConfig, schedule_arrays
from .trace import UniformTrace

COMPONENTS = ("x", "y", "z", "yaw", "pitch", "roll")
METHODS = ("prediction", "baseline")
DEFAULT_LATS_MS = (20.0, 40.0, 60.0, 80.0, 100.0)
DEFAULT_FRAME_INTERVAL_MS = 10.0

REPORT_COLUMNS = ("trace_id", "lat_ms", "component", "method", "mae")
FRAME_COLUMNS = ("trace_id", "lat_ms", "t_target_ms", "component", "truth", "predicted", "baseline")


@dataclass(frozen=True)
class EvalRecord:
    t_target_ms: float
    truth: tuple
    predicted: tuple
    baseline: tuple


@dataclass(frozen=True)
class FrameDetail:
    """Per-prediction values in component order x, y, z, yaw, pitch, roll."""

    t_target: np.ndarray
    truth: np.ndarray
    predicted: np.ndarray
    baseline: np.ndarray
    truth_rot: np.ndarray
    predicted_rot: np.ndarray
    baseline_rot: np.ndarray

    def records(self) -> list[EvalRecord]:
        out = []
        for i, t in enumerate(self.t_target):
            out.append(EvalRecord(
                float(t),
                (tuple(self.truth[i, :3]), tuple(self.truth_rot[i])),
                (tuple(self.predicted[i, :3]), tuple(self.predicted_rot[i])),
                (tuple(self.baseline[i, :3]), tuple(self.baseline_rot[i])),
            ))
        return out


@dataclass(frozen=True)
class MaeReport:
    trace_id: str
    lat_ms: float
    n: int
    prediction: dict
    baseline: dict
    prediction_geodesic_deg: float = math.nan
    baseline_geodesic_deg: float = math.nan
    detail: FrameDetail | None = field(default=None, compare=False, repr=False)

    def mae(self, method: str, component: str) -> float:
        if component == "geodesic":
            return self.prediction_geodesic_deg if method == "prediction" else self.baseline_geodesic_deg
        return getattr(self, method)[component]


def _pose_components(pos: np.ndarray, rot: np.ndarray) -> np.ndarray:
    return np.column_stack([pos, quat.to_euler(rot)])


def _default_config(models: ModelPair, trace: UniformTrace, lat_ms: float) -> PredictionConfig:
    period = trace.period_ms
    frame = DEFAULT_FRAME_INTERVAL_MS
    ratio = frame / period
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        frame = period
    return PredictionConfig(models.rho * period, lat_ms, frame, period)


def evaluate_trace(models: ModelPair, trace: UniformTrace, lat_ms: float,
                   config: PredictionConfig | None = None, keep_detail: bool = False) -> MaeReport:
    """Score the prediction schedule on one trace for one look-ahead time.

    Predictions whose target lies past the end of the trace have no ground
    truth and are dropped from both methods.
    """
    config = _default_config(models, trace, lat_ms) if config is None else config.with_lat(lat_ms)
    s = schedule_arrays(models, trace, config)
    target = s.issue_index + s.lat_steps
    keep = target < len(trace)
    if not np.any(keep):
        raise TraceTooShortError(
            f"trace {trace.source_id!r} has no prediction with ground truth at {lat_ms} ms look-ahead"
        )
    target = target[keep]
    lagged = target - s.lat_steps

    truth_rot = trace.rot[target]
    pred_rot = s.rot[keep]
    base_rot = trace.rot[lagged]
    truth = _pose_components(trace.pos[target], truth_rot)
    pred = _pose_components(s.pos[keep], pred_rot)
    base = _pose_components(trace.pos[lagged], base_rot)

    def errors(est: np.ndarray) -> np.ndarray:
        err = np.abs(est - truth)
        err[:, 3:] = np.abs(quat.wrap_degrees(est[:, 3:] - truth[:, 3:]))
        return err

    pe, be = errors(pred), errors(base)
    detail = None
    if keep_detail:
        detail = FrameDetail(s.t_target[keep], truth, pred, base, truth_rot, pred_rot, base_rot)
    return MaeReport(
        trace_id=trace.source_id,
        lat_ms=float(lat_ms),
        n=int(len(target)),
        prediction=dict(zip(COMPONENTS, map(float, pe.mean(axis=0)))),
        baseline=dict(zip(COMPONENTS, map(float, be.mean(axis=0)))),
        prediction_geodesic_deg=float(np.degrees(quat.angle_between(pred_rot, truth_rot)).mean()),
        baseline_geodesic_deg=float(np.degrees(quat.angle_between(base_rot, truth_rot)).mean()),
        detail=detail,
    )


def _evaluate_job(args):
    models, trace, lat, config, keep_detail = args
    return evaluate_trace(models, trace, lat, config, keep_detail)


def sweep_lat(models: ModelPair, traces: Sequence[UniformTrace], lats_ms: Sequence[float] = DEFAULT_LATS_MS,
              config: PredictionConfig | None = None, keep_detail: bool = False,
              max_workers: int | None = None) -> list[MaeReport]:
    """One report per (trace, lat) pair, ordered trace-major.

    Use :func:`average_by_lat` for the cross-trace averages.
    """
    jobs = [(models, tr, float(lat), config, keep_detail) for tr, lat in product(traces, lats_ms)]
    if max_workers and max_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_evaluate_job, jobs))
    return [_evaluate_job(j) for j in jobs]


def average_by_lat(reports: Sequence[MaeReport], trace_id: str = "mean") -> list[MaeReport]:
    """Arithmetic mean of per-trace MAEs for each look-ahead time."""
    by_lat: dict[float, list[MaeReport]] = {}
    for r in reports:
        by_lat.setdefault(r.lat_ms, []).append(r)
    out = []
    for lat, group in by_lat.items():
        out.append(MaeReport(
            trace_id=trace_id,
            lat_ms=lat,
            n=sum(r.n for r in group),
            prediction={c: float(np.mean([r.prediction[c] for r in group])) for c in COMPONENTS},
            baseline={c: float(np.mean([r.baseline[c] for r in group])) for c in COMPONENTS},
            prediction_geodesic_deg=float(np.mean([r.prediction_geodesic_deg for r in group])),
            baseline_geodesic_deg=float(np.mean([r.baseline_geodesic_deg for r in group])),
        ))
    return out


def report_rows(reports: Sequence[MaeReport], include_geodesic: bool = False) -> list[dict]:
    components = COMPONENTS + (("geodesic",) if include_geodesic else ())
    rows = []
    for r in reports:
        for comp, method in product(components, METHODS):
            rows.append({
                "trace_id": r.trace_id, "lat_ms": r.lat_ms, "component": comp,
                "method": method, "mae": r.mae(method, comp), "n": r.n,
            })
    return rows


def export_report(reports: Sequence[MaeReport], path, format: str = "csv",
                  per_frame_path=None) -> None:
    """Write MAE rows as CSV or JSON, optionally with a per-frame CSV.

    The JSON form also carries the geodesic rotation error as an extra
    component; the CSV form holds only the six pose components.
    """
    if not reports:
        raise ValueError("export_report needs at least one report")
    if format not in ("csv", "json"):
        raise ValueError(f"unknown report format {format!r}")
    path = Path(path)
    if format == "json":
        path.write_text(json.dumps(report_rows(reports, include_geodesic=True), indent=1))
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for row in report_rows(reports):
                writer.writerow([row["trace_id"], repr(row["lat_ms"]), row["component"],
                                 row["method"], repr(row["mae"])])
    if per_frame_path is not None:
        write_per_frame(reports, per_frame_path)


def write_per_frame(reports: Sequence[MaeReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRAME_COLUMNS)
        for r in reports:
            d = r.detail
            if d is None:
                raise ValueError(f"report for {r.trace_id!r} at {r.lat_ms} ms carries no per-frame detail")
            for i, t in enumerate(d.t_target):
                for j, comp in enumerate(COMPONENTS):
                    writer.writerow([r.trace_id, repr(r.lat_ms), repr(float(t)), comp,
                                     repr(float(d.truth[i, j])), repr(float(d.predicted[i, j])),
                                     repr(float(d.baseline[i, j]))])


def read_report(path, format: str | None = None) -> list[MaeReport]:
    """Inverse of :func:`export_report` (per-frame detail is not restored)."""
    path = Path(path)
    format = format or path.suffix.lstrip(".").lower()
    if format == "json":
        rows = json.loads(path.read_text())
    elif format == "csv":
        with open(path, newline="") as fh:
            rows = [dict(r, lat_ms=float(r["lat_ms"]), mae=float(r["mae"])) for r in csv.DictReader(fh)]
    else:
        raise ValueError(f"unknown report format {format!r}")

    grouped: dict[tuple, dict] = {}
    for row in rows:
        key = (row["trace_id"], float(row["lat_ms"]))
        g = grouped.setdefault(key, {"prediction": {}, "baseline": {}, "n": row.get("n", 0)})
        g[row["method"]][row["component"]] = row["mae"]
    out = []
    for (trace_id, lat), g in grouped.items():
        pred_geo = g["prediction"].pop("geodesic", math.nan)
        base_geo = g["baseline"].pop("geodesic", math.nan)
        out.append(MaeReport(trace_id, lat, int(g["n"]), g["prediction"], g["baseline"], pred_geo, base_geo))
    return out

"""6DoF pose prediction over a sliding history window.

Position channels share one AR model and quaternion channels share another.
Each channel is forecast independently by iterating its model up to the
look-ahead time; only the final quaternion is renormalized.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import ar, quat
from .errors import ConfigError, DegenerateQuaternionError, LengthMismatchError, TraceTooShortError
from .trace import CHANNELS, POSITION_CHANNELS, ROTATION_CHANNELS, PoseSample, UniformTrace

PREDICTED_QUAT_MIN_NORM = 1e-6


def _ratio(numer: float, denom: float, what: str) -> int:
    if not (denom > 0 and math.isfinite(numer) and math.isfinite(denom)):
        raise ConfigError(f"{what}: invalid time values {numer!r}/{denom!r}")
    k = numer / denom
    n = int(round(k))
    if n < 1 or abs(k - n) > 1e-9 * max(1.0, abs(k)):
        raise ConfigError(f"{what} ({numer} ms) must be a positive multiple of the {denom} ms sample period")
    return n


@dataclass(frozen=True)
class PredictionConfig:
    history_window_ms: float = 160.0
    lat_ms: float = 40.0
    frame_interval_ms: float = 10.0
    sample_period_ms: float = 5.0

    def __post_init__(self):
        # validate eagerly so bad configs fail at construction
        self.rho, self.lat_steps, self.frame_stride

    @property
    def rho(self) -> int:
        return _ratio(self.history_window_ms, self.sample_period_ms, "history window")

    @property
    def lat_steps(self) -> int:
        return _ratio(self.lat_ms, self.sample_period_ms, "look-ahead time")

    @property
    def frame_stride(self) -> int:
        return _ratio(self.frame_interval_ms, self.sample_period_ms, "frame interval")

    def with_lat(self, lat_ms: float) -> "PredictionConfig":
        return PredictionConfig(self.history_window_ms, lat_ms, self.frame_interval_ms, self.sample_period_ms)


@dataclass(frozen=True)
class ModelPair:
    trans_model: ar.ArModel
    rot_model: ar.ArModel
    # optional per-channel overrides, e.g. from per-channel retraining
    channel_models: dict = field(default_factory=dict)

    def __post_init__(self):
        rhos = {self.trans_model.rho, self.rot_model.rho}
        rhos.update(m.rho for m in self.channel_models.values())
        if len(rhos) != 1:
            raise ConfigError(f"all models must share one lag order, got {sorted(rhos)}")
        unknown = set(self.channel_models) - set(CHANNELS)
        if unknown:
            raise ConfigError(f"unknown channels in overrides: {sorted(unknown)}")

    @property
    def rho(self) -> int:
        return self.trans_model.rho

    def model_for(self, name: str) -> ar.ArModel:
        if name in self.channel_models:
            return self.channel_models[name]
        return self.trans_model if name in POSITION_CHANNELS else self.rot_model

    @classmethod
    def persistence(cls, rho: int) -> "ModelPair":
        m = ar.ArModel.persistence(rho)
        return cls(m, m)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "trans_model": self.trans_model.to_dict(),
            "rot_model": self.rot_model.to_dict(),
            "channel_models": {k: m.to_dict() for k, m in self.channel_models.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelPair":
        return cls(
            ar.ArModel.from_dict(d["trans_model"]),
            ar.ArModel.from_dict(d["rot_model"]),
            {k: ar.ArModel.from_dict(v) for k, v in d.get("channel_models", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ModelPair":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_grid(trace: UniformTrace, config: PredictionConfig) -> None:
    if abs(trace.period_ms - config.sample_period_ms) > 1e-9:
        raise ConfigError(
            f"trace period {trace.period_ms} ms does not match configured sample period "
            f"{config.sample_period_ms} ms"
        )


def train_default_models(trace: UniformTrace, config: PredictionConfig = PredictionConfig(),
                         per_channel: bool = False) -> ModelPair:
    """Fit the translational model on x and the rotational model on qx.

    With ``per_channel=True`` every channel additionally gets its own model
    fitted on that channel.
    """
    _check_grid(trace, config)
    rho = config.rho
    label = trace.source_id or "trace"
    rot = quat.align_hemisphere(trace.rot)
    trans_model = ar.fit(trace.channel("x"), rho, trained_on=f"{label}:x")
    rot_model = ar.fit(rot[:, 0], rho, trained_on=f"{label}:qx")
    overrides = {}
    if per_channel:
        for i, name in enumerate(POSITION_CHANNELS):
            overrides[name] = ar.fit(trace.pos[:, i], rho, trained_on=f"{label}:{name}")
        for i, name in enumerate(ROTATION_CHANNELS):
            overrides[name] = ar.fit(rot[:, i], rho, trained_on=f"{label}:{name}")
    return ModelPair(trans_model, rot_model, overrides)


def _predict_block(models: ModelPair, pos_hist: np.ndarray, rot_hist: np.ndarray,
                   steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Forecast stacked windows: pos_hist is (B, rho, 3), rot_hist (B, rho, 4)."""
    pos = np.empty(pos_hist.shape[:1] + (3,))
    rot = np.empty(rot_hist.shape[:1] + (4,))
    for i, name in enumerate(POSITION_CHANNELS):
        pos[:, i] = ar.forecast_multi(models.model_for(name), pos_hist[:, :, i], steps)[:, -1]
    for i, name in enumerate(ROTATION_CHANNELS):
        rot[:, i] = ar.forecast_multi(models.model_for(name), rot_hist[:, :, i], steps)[:, -1]
    norms = np.linalg.norm(rot, axis=1)
    if np.any(~np.isfinite(norms)) or np.any(norms < PREDICTED_QUAT_MIN_NORM):
        raise DegenerateQuaternionError(
            "predicted quaternion collapsed (norm below 1e-6); the rotation model diverged"
        )
    return pos, rot / norms[:, None]


def predict_pose(models: ModelPair, history: Sequence[PoseSample] | UniformTrace, lat_ms: float,
                 sample_period_ms: float = 5.0) -> PoseSample:
    """Predict the pose ``lat_ms`` after the newest history sample."""
    if isinstance(history, UniformTrace):
        sample_period_ms = history.period_ms
        times, pos, rot = history.times, history.pos, history.rot
    else:
        times = np.array([s.t for s in history], dtype=float)
        pos = np.array([s.pos for s in history], dtype=float).reshape(-1, 3)
        rot = np.array([s.rot for s in history], dtype=float).reshape(-1, 4)
    if len(times) != models.rho:
        raise LengthMismatchError(f"history must hold exactly {models.rho} samples, got {len(times)}")
    if len(times) > 1 and np.max(np.abs(np.diff(times) - sample_period_ms)) > 1e-6:
        raise ConfigError(f"history is not on a {sample_period_ms} ms grid")
    steps = _ratio(lat_ms, sample_period_ms, "look-ahead time")
    rot = quat.align_hemisphere(quat.normalize(rot))
    p, r = _predict_block(models, pos[None], rot[None], steps)
    return PoseSample(float(times[-1] + lat_ms), tuple(map(float, p[0])), tuple(map(float, r[0])))


class Prediction(NamedTuple):
    t_target: float
    pose: PoseSample
    t_issue: float
    issue_index: int


@dataclass(frozen=True)
class ScheduleArrays:
    """Column-oriented schedule output used internally by the evaluator."""

    issue_index: np.ndarray
    t_issue: np.ndarray
    t_target: np.ndarray
    pos: np.ndarray
    rot: np.ndarray
    lat_steps: int


def schedule_arrays(models: ModelPair, trace: UniformTrace, config: PredictionConfig) -> ScheduleArrays:
    _check_grid(trace, config)
    rho = config.rho
    if models.rho != rho:
        raise ConfigError(f"models use rho={models.rho} but the history window implies rho={rho}")
    n = len(trace)
    if n < rho:
        raise TraceTooShortError(f"trace has {n} samples; a {config.history_window_ms} ms window needs {rho}")
    issue = np.arange(rho - 1, n, config.frame_stride)
    win = np.lib.stride_tricks.sliding_window_view
    # windows[k] covers samples issue[k]-rho+1 .. issue[k]
    pos_hist = win(trace.pos, rho, axis=0)[issue - rho + 1].transpose(0, 2, 1)
    rot_hist = win(trace.rot, rho, axis=0)[issue - rho + 1].transpose(0, 2, 1)
    pos, rot = _predict_block(models, pos_hist, rot_hist, config.lat_steps)
    t_issue = trace.times[issue]
    return ScheduleArrays(issue, t_issue, t_issue + config.lat_ms, pos, rot, config.lat_steps)


def run_prediction_schedule(models: ModelPair, trace: UniformTrace,
                            config: PredictionConfig) -> list[Prediction]:
    """Issue one prediction per display frame once a full history window exists.

    A prediction issued at grid sample ``i`` sees only samples ``<= i``.
    """
    s = schedule_arrays(models, trace, config)
    return [
        Prediction(float(tt), PoseSample(float(tt), tuple(map(float, p)), tuple(map(float, r))), float(ti), int(i))
        for i, ti, tt, p, r in zip(s.issue_index, s.t_issue, s.t_target, s.pos, s.rot)
    ]


PREDICTION_COLUMNS = ("t_issue_ms", "t_target_ms", "x", "y", "z", "qx", "qy", "qz", "qw")


def write_predictions_csv(predictions: Sequence[Prediction], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_COLUMNS)
        for p in predictions:
            writer.writerow([repr(v) for v in (p.t_issue, p.t_target, *p.pose.pos, *p.pose.rot)])

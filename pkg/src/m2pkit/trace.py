"""6DoF pose traces: loading, validation and uniform resampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import quat
from .errors import (
    DegenerateQuaternionError,
    EmptyTraceError,
    InsufficientSamplesError,
    TraceOrderError,
    TraceParseError,
    UnknownChannelError,
)

COLUMNS = ("t_ms", "x", "y", "z", "qx", "qy", "qz", "qw")
CHANNELS = ("x", "y", "z", "qx", "qy", "qz", "qw")
POSITION_CHANNELS = CHANNELS[:3]
ROTATION_CHANNELS = CHANNELS[3:]

DEFAULT_PERIOD_MS = 5.0

# Header aliases accepted by the dataset reader adapter (lower-cased).
_DATASET_ALIASES = {
    "t_ms": ("t_ms", "timestamp", "time", "t", "time_ms", "timestamp_ms"),
    "x": ("x", "pos_x", "px", "position_x"),
    "y": ("y", "pos_y", "py", "position_y"),
    "z": ("z", "pos_z", "pz", "position_z"),
    "qx": ("qx", "rot_x", "quat_x", "rx", "q_x"),
    "qy": ("qy", "rot_y", "quat_y", "ry", "q_y"),
    "qz": ("qz", "rot_z", "quat_z", "rz", "q_z"),
    "qw": ("qw", "rot_w", "quat_w", "rw", "q_w"),
}


@dataclass(frozen=True)
class PoseSample:
    t: float
    pos: tuple[float, float, float]
    rot: tuple[float, float, float, float]

    def as_row(self) -> list[float]:
        return [self.t, *self.pos, *self.rot]


class _PoseArrays:
    """Shared array-backed storage for raw and uniform traces."""

    times: np.ndarray
    pos: np.ndarray
    rot: np.ndarray

    def __len__(self) -> int:
        return len(self.pos)

    @property
    def samples(self) -> list[PoseSample]:
        return [
            PoseSample(float(t), tuple(map(float, p)), tuple(map(float, r)))
            for t, p, r in zip(self.times, self.pos, self.rot)
        ]

    def channel(self, name: str) -> np.ndarray:
        return channel(self, name)


@dataclass(frozen=True, eq=False)
class RawTrace(_PoseArrays):
    """Unevenly sampled trace as recorded by the headset."""

    times: np.ndarray
    pos: np.ndarray
    rot: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        for name, width in (("times", None), ("pos", 3), ("rot", 4)):
            arr = np.array(getattr(self, name), dtype=float)
            if width is not None:
                arr = arr.reshape(-1, width)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_samples(cls, samples: Sequence[PoseSample], source_id: str = "") -> "RawTrace":
        rows = np.array([s.as_row() for s in samples], dtype=float).reshape(-1, 8)
        return _validated_raw(rows, source_id)


@dataclass(frozen=True, eq=False)
class UniformTrace(_PoseArrays):
    """Trace on the grid ``t0 + i * period_ms``."""

    t0: float
    period_ms: float
    pos: np.ndarray
    rot: np.ndarray
    source_id: str = ""
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.asarray(self.pos, dtype=float).reshape(-1, 3)
        rot = np.asarray(self.rot, dtype=float).reshape(-1, 4)
        if len(pos) != len(rot):
            raise ValueError("position and rotation arrays differ in length")
        if not self.period_ms > 0:
            raise ValueError("period_ms must be positive")
        times = self.t0 + np.arange(len(pos)) * self.period_ms
        for name, arr in (("pos", pos), ("rot", rot), ("times", times)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def index_of(self, t_ms: float) -> int:
        """Grid index of timestamp ``t_ms``; raises if it is off-grid."""
        k = (t_ms - self.t0) / self.period_ms
        i = int(round(k))
        if abs(k - i) > 1e-6 or not 0 <= i < len(self):
            raise IndexError(f"{t_ms} ms is not a grid timestamp of this trace")
        return i

    def window(self, start: int, stop: int) -> "UniformTrace":
        return UniformTrace(
            self.t0 + start * self.period_ms, self.period_ms,
            self.pos[start:stop], self.rot[start:stop], self.source_id,
        )

    def shifted(self, dt_ms: float) -> "UniformTrace":
        return UniformTrace(self.t0 + dt_ms, self.period_ms, self.pos, self.rot, self.source_id)


def channel(trace: _PoseArrays, name: str) -> np.ndarray:
    """Scalar series of one of x, y, z, qx, qy, qz, qw."""
    if name in POSITION_CHANNELS:
        return trace.pos[:, POSITION_CHANNELS.index(name)].copy()
    if name in ROTATION_CHANNELS:
        return trace.rot[:, ROTATION_CHANNELS.index(name)].copy()
    raise UnknownChannelError(f"unknown channel {name!r}; expected one of {', '.join(CHANNELS)}")


def _validated_raw(rows: np.ndarray, source_id: str, row_numbers: Sequence[int] | None = None) -> RawTrace:
    if len(rows) == 0:
        raise EmptyTraceError(f"trace {source_id!r} contains no samples")
    if row_numbers is None:
        row_numbers = range(1, len(rows) + 1)
    for r, rownum in zip(rows, row_numbers):
        if not np.all(np.isfinite(r)):
            bad = [COLUMNS[i] for i in np.flatnonzero(~np.isfinite(r))]
            raise TraceParseError(f"non-finite value in {', '.join(bad)}", rownum)
        if r[0] < 0:
            raise TraceParseError("negative timestamp", rownum)
    t = rows[:, 0]
    steps = np.diff(t)
    if np.any(steps <= 0):
        i = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise TraceOrderError(
            f"timestamps must be strictly increasing: row {row_numbers[i]} has t={t[i]!r} "
            f"after t={t[i - 1]!r}"
        )
    try:
        rot = quat.normalize(rows[:, 4:8])
    except DegenerateQuaternionError:
        norms = np.linalg.norm(rows[:, 4:8], axis=1)
        i = int(np.argmin(norms))
        raise TraceParseError("zero-length quaternion", row_numbers[i]) from None
    return RawTrace(t.copy(), rows[:, 1:4].copy(), rot, source_id)


def _parse_float(text: str, rownum: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise TraceParseError(f"cannot parse {column}={text!r} as a number", rownum) from None


def _read_rows(path: Path) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="") as fh:
        for rownum, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if row[0].lstrip().startswith("#"):
                continue
            yield rownum, [cell.strip() for cell in row]


def _is_header(cells: list[str]) -> bool:
    try:
        float(cells[0])
    except ValueError:
        return True
    return False


def load_trace(path, format: str = "csv", source_id: str | None = None,
               time_scale: float | str = 1.0) -> RawTrace:
    """Read a raw 6DoF trace.

    ``format="csv"`` expects the canonical ``t_ms,x,y,z,qx,qy,qz,qw`` column
    order (header optional). ``format="dataset"`` maps named header columns
    onto that schema using common aliases, and multiplies timestamps by
    ``time_scale`` (e.g. 1000 for second-based logs). ``time_scale="auto"``
    treats a median step below 0.1 as seconds.
    """
    path = Path(path)
    if format not in ("csv", "dataset"):
        raise ValueError(f"unknown trace format {format!r}")
    if source_id is None:
        source_id = path.stem
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")

    order = list(range(8))
    rows, numbers = [], []
    header_seen = False
    for rownum, cells in _read_rows(path):
        if not header_seen and not rows and _is_header(cells):
            header_seen = True
            if format == "dataset":
                order = _dataset_columns(cells, rownum)
            continue
        if format == "csv" and len(cells) != 8:
            raise TraceParseError(f"expected 8 columns, found {len(cells)}", rownum)
        if max(order) >= len(cells):
            raise TraceParseError(f"row has only {len(cells)} columns", rownum)
        rows.append([_parse_float(cells[j], rownum, COLUMNS[k]) for k, j in enumerate(order)])
        numbers.append(rownum)

    if format == "dataset" and not header_seen:
        raise TraceParseError("dataset format requires a header row", 1)
    data = np.array(rows, dtype=float).reshape(-1, 8)
    if time_scale == "auto":
        steps = np.diff(data[:, 0])
        time_scale = 1000.0 if len(steps) and np.median(steps) < 0.1 else 1.0
    data[:, 0] *= float(time_scale)
    return _validated_raw(data, source_id, numbers)


def _dataset_columns(header: list[str], rownum: int) -> list[int]:
    lowered = [h.lower().replace(" ", "") for h in header]
    order = []
    for col in COLUMNS:
        for alias in _DATASET_ALIASES[col]:
            if alias in lowered:
                order.append(lowered.index(alias))
                break
        else:
            raise TraceParseError(f"header has no column for {col!r}: {header}", rownum)
    return order


def save_trace(trace: _PoseArrays, path) -> None:
    """Write any trace in the canonical CSV layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for t, p, r in zip(trace.times, trace.pos, trace.rot):
            writer.writerow([repr(float(v)) for v in (t, *p, *r)])


def load_uniform(path, source_id: str | None = None, tol_ms: float = 1e-6) -> UniformTrace:
    """Read a trace written by :func:`save_trace` from a uniform trace."""
    raw = load_trace(path, source_id=source_id)
    if len(raw) < 2:
        raise InsufficientSamplesError(f"{path}: a uniform trace needs at least 2 samples")
    steps = np.diff(raw.times)
    period = float(np.median(steps))
    grid = raw.times[0] + np.arange(len(raw)) * period
    if np.max(np.abs(grid - raw.times)) > tol_ms:
        raise TraceParseError(f"{path}: samples are not on a uniform grid")
    return UniformTrace(float(raw.times[0]), period, raw.pos, quat.align_hemisphere(raw.rot), raw.source_id)


def _grid_length(t_first: float, t_last: float, period_ms: float) -> int:
    k = math.floor((t_last - t_first) / period_ms)
    while t_first + (k + 1) * period_ms <= t_last:
        k += 1
    while k > 0 and t_first + k * period_ms > t_last:
        k -= 1
    return k + 1


def resample(trace: RawTrace, period_ms: float = DEFAULT_PERIOD_MS) -> UniformTrace:
    """Resample onto a uniform grid anchored at the first raw timestamp.

    Positions are linearly interpolated and rotations slerped between the
    bracketing raw samples. Raw quaternions are hemisphere-aligned first so
    interpolation follows the short arc.
    """
    if not period_ms > 0 or not math.isfinite(period_ms):
        raise ValueError("period_ms must be a positive finite number")
    if len(trace) < 2:
        raise InsufficientSamplesError("resampling needs at least 2 raw samples")

    t = np.asarray(trace.times, dtype=float)
    t0 = float(t[0])
    n = _grid_length(t0, float(t[-1]), period_ms)
    grid = t0 + np.arange(n) * period_ms

    rot = quat.align_hemisphere(trace.rot)
    lo = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 2)
    hi = lo + 1
    u = np.clip((grid - t[lo]) / (t[hi] - t[lo]), 0.0, 1.0)

    uc = u[:, None]
    pos = (1.0 - uc) * trace.pos[lo] + uc * trace.pos[hi]
    rot_out = quat.slerp(rot[lo], rot[hi], u)
    # keep exact raw quaternions where the grid hits a raw sample
    rot_out = np.where((u == 0.0)[:, None], rot[lo], rot_out)
    rot_out = np.where((u == 1.0)[:, None], rot[hi], rot_out)
    rot_out = quat.align_hemisphere(rot_out)
    return UniformTrace(t0, float(period_ms), pos, rot_out, trace.source_id)

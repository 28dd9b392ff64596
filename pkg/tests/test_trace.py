import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2pkit import quat, synth
from m2pkit.errors import (
    EmptyTraceError,
    InsufficientSamplesError,
    TraceOrderError,
    TraceParseError,
    UnknownChannelError,
)
from m2pkit.trace import (
    PoseSample,
    RawTrace,
    UniformTrace,
    channel,
    load_trace,
    load_uniform,
    resample,
    save_trace,
)

HEADER = "t_ms,x,y,z,qx,qy,qz,qw\n"


def write(tmp_path, body, name="trace.csv"):
    p = tmp_path / name
    p.write_text(body)
    return p


def two_point(x1=1.0, rot1=(0, 0, 0, 1), t1=10.0):
    return RawTrace.from_samples([
        PoseSample(0.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.0)),
        PoseSample(t1, (x1, 0.0, 0.0), tuple(rot1)),
    ])


def test_load_minimal(tmp_path):
    p = write(tmp_path, HEADER + "0,0,0,0,0,0,0,1\n7,1,0,0,0,0,0,1\n")
    tr = load_trace(p)
    assert len(tr) == 2
    assert tr.source_id == "trace"
    assert list(tr.times) == [0, 7]
    assert tr.pos[1, 0] == 1.0


def test_load_without_header_and_with_comments(tmp_path):
    p = write(tmp_path, "# recorded on device A\n0,0,0,0,0,0,0,2\n\n# gap\n5,0,0,0,0,0,0,1\n")
    tr = load_trace(p)
    assert len(tr) == 2
    assert np.allclose(tr.rot[0], [0, 0, 0, 1])


def test_nan_rejected_with_row_number(tmp_path):
    p = write(tmp_path, HEADER + "0,0,0,0,0,0,0,1\n5,0,0,0,0,0,0,nan\n")
    with pytest.raises(TraceParseError, match="row 3") as exc:
        load_trace(p)
    assert exc.value.row == 3
    assert "qw" in str(exc.value)


def test_malformed_row(tmp_path):
    p = write(tmp_path, HEADER + "0,0,0,0,0,0,0,1\n5,0,zero,0,0,0,0,1\n")
    with pytest.raises(TraceParseError, match="row 3"):
        load_trace(p)
    p = write(tmp_path, HEADER + "0,0,0,0,0,0,1\n")
    with pytest.raises(TraceParseError, match="8 columns"):
        load_trace(p)


def test_duplicate_timestamp_is_order_error(tmp_path):
    p = write(tmp_path, HEADER + "0,0,0,0,0,0,0,1\n5,0,0,0,0,0,0,1\n5,0,0,0,0,0,0,1\n")
    with pytest.raises(TraceOrderError):
        load_trace(p)


def test_empty_and_missing(tmp_path):
    with pytest.raises(EmptyTraceError):
        load_trace(write(tmp_path, HEADER))
    with pytest.raises(FileNotFoundError):
        load_trace(tmp_path / "nope.csv")


def test_zero_quaternion_and_negative_time(tmp_path):
    with pytest.raises(TraceParseError, match="row 2"):
        load_trace(write(tmp_path, HEADER + "0,0,0,0,0,0,0,0\n"))
    with pytest.raises(TraceParseError, match="negative"):
        load_trace(write(tmp_path, HEADER + "-1,0,0,0,0,0,0,1\n"))


def test_dataset_adapter(tmp_path):
    body = "timestamp,qw,qx,qy,qz,x,y,z\n0.000,1,0,0,0,0.1,0.2,0.3\n0.016,1,0,0,0,0.2,0.2,0.3\n"
    tr = load_trace(write(tmp_path, body), format="dataset", time_scale=1000)
    assert np.allclose(tr.times, [0, 16])
    assert np.allclose(tr.pos[1], [0.2, 0.2, 0.3])
    assert np.allclose(tr.rot[0], [0, 0, 0, 1])


def test_dataset_adapter_needs_columns(tmp_path):
    with pytest.raises(TraceParseError, match="qw"):
        load_trace(write(tmp_path, "t,x,y,z,qx,qy,qz\n0,0,0,0,0,0,0\n"), format="dataset")


def test_resample_linear_midpoint():
    out = resample(two_point(), 5.0)
    assert list(out.times) == [0, 5, 10]
    assert list(channel(out, "x")) == [0.0, 0.5, 1.0]


def test_resample_slerp_midpoint():
    z90 = quat.from_axis_angle([0, 0, 1], math.pi / 2)
    out = resample(two_point(0.0, z90), 5.0)
    # slerp between two rotations scales the angle linearly
    assert np.allclose(out.rot[1], quat.from_axis_angle([0, 0, 1], math.pi / 4), atol=1e-12)


def test_resample_identity_on_grid():
    dense = synth.head_motion(duration_ms=500, seed=3)
    raw = RawTrace(dense.times, dense.pos, dense.rot, "g")
    out = resample(raw, 5.0)
    assert np.array_equal(out.pos, dense.pos)
    assert np.array_equal(out.times, dense.times)
    assert np.max(np.abs(out.rot - dense.rot)) <= 1e-9


def test_resample_does_not_extrapolate():
    raw = RawTrace.from_samples([
        PoseSample(3.0, (0, 0, 0), (0, 0, 0, 1)),
        PoseSample(17.5, (1, 0, 0), (0, 0, 0, 1)),
    ])
    out = resample(raw, 5.0)
    assert out.t0 == 3.0
    assert list(out.times) == [3.0, 8.0, 13.0]


def test_resample_needs_two_samples():
    one = RawTrace.from_samples([PoseSample(0.0, (0, 0, 0), (0, 0, 0, 1))])
    with pytest.raises(InsufficientSamplesError):
        resample(one)
    with pytest.raises(ValueError):
        resample(two_point(), 0.0)


def test_resample_fixes_sign_flips():
    z90 = quat.from_axis_angle([0, 0, 1], math.pi / 2)
    out = resample(two_point(0.0, -z90), 5.0)
    assert np.allclose(out.rot[1], quat.from_axis_angle([0, 0, 1], math.pi / 4), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 20.0))
def test_resample_invariants(seed, period):
    dense = synth.head_motion(duration_ms=2000, seed=seed % 50)
    raw = synth.jittered_raw(dense, rate_hz=60, seed=seed)
    rng = np.random.default_rng(seed)
    # random sign flips must not matter
    flips = np.where(rng.random(len(raw)) < 0.3, -1.0, 1.0)[:, None]
    raw = RawTrace(raw.times, raw.pos, raw.rot * flips, raw.source_id)
    out = resample(raw, period)

    assert out.times[0] == raw.times[0]
    assert out.times[-1] <= raw.times[-1]
    assert np.allclose(np.diff(out.times), period)
    assert np.all(np.abs(np.linalg.norm(out.rot, axis=1) - 1) <= 1e-9)
    assert np.all(np.sum(out.rot[1:] * out.rot[:-1], axis=1) >= 0)

    lo = np.searchsorted(raw.times, out.times, side="right") - 1
    hi = np.minimum(lo + 1, len(raw) - 1)
    lower = np.minimum(raw.pos[lo], raw.pos[hi]) - 1e-12
    upper = np.maximum(raw.pos[lo], raw.pos[hi]) + 1e-12
    assert np.all((out.pos >= lower) & (out.pos <= upper))


def test_channels():
    out = resample(two_point(), 5.0)
    assert np.array_equal(channel(out, "qw"), np.ones(3))
    assert out.channel("x").tolist() == [0.0, 0.5, 1.0]
    with pytest.raises(UnknownChannelError, match="pitch"):
        channel(out, "pitch")


def test_traces_are_immutable():
    tr = synth.constant()
    with pytest.raises(ValueError):
        tr.pos[0, 0] = 1.0
    src = np.zeros((2, 3))
    RawTrace(np.array([0.0, 1.0]), src, np.tile([0, 0, 0, 1.0], (2, 1)))
    src[0, 0] = 1.0  # caller's array stays writable


def test_save_and_load_uniform_round_trip(tmp_path):
    tr = synth.head_motion(duration_ms=300, seed=1)
    path = tmp_path / "u.csv"
    save_trace(tr, path)
    back = load_uniform(path)
    assert back.period_ms == 5.0
    assert np.array_equal(back.pos, tr.pos)
    assert np.allclose(back.rot, tr.rot, atol=1e-15)


def test_load_uniform_rejects_uneven(tmp_path):
    p = write(tmp_path, HEADER + "0,0,0,0,0,0,0,1\n5,0,0,0,0,0,0,1\n11,0,0,0,0,0,0,1\n")
    with pytest.raises(TraceParseError, match="uniform"):
        load_uniform(p)


def test_uniform_trace_helpers():
    tr = synth.head_motion(duration_ms=100, seed=2)
    assert tr.index_of(35.0) == 7
    with pytest.raises(IndexError):
        tr.index_of(36.0)
    w = tr.window(4, 8)
    assert w.t0 == 20.0 and len(w) == 4
    assert tr.shifted(100.0).times[0] == 100.0
    assert tr.samples[3].t == 15.0


def test_dataset_adapter_auto_time_scale(tmp_path):
    body = "t,x,y,z,qx,qy,qz,qw\n0.0,0,0,0,0,0,0,1\n0.005,0,0,0,0,0,0,1\n0.01,0,0,0,0,0,0,1\n"
    tr = load_trace(write(tmp_path, body), format="dataset", time_scale="auto")
    assert np.allclose(tr.times, [0, 5, 10])
    ms = "t,x,y,z,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\n5,0,0,0,0,0,0,1\n"
    assert np.allclose(load_trace(write(tmp_path, ms, "b.csv"), format="dataset", time_scale="auto").times, [0, 5])

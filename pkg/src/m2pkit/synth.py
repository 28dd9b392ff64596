"""Seeded synthetic pose traces for tests and desk-scale experiments."""

from __future__ import annotations

import numpy as np

from . import quat
from .trace import RawTrace, UniformTrace

KINDS = ("constant", "ramp", "sinusoid", "ar", "head")


def _times(duration_ms: float, period_ms: float) -> np.ndarray:
    n = int(round(duration_ms / period_ms))
    return np.arange(n) * period_ms


def constant(duration_ms: float = 1000.0, period_ms: float = 5.0, pos=(0.1, 1.6, -0.4),
             rot=(0.0, 0.0, 0.0, 1.0), source_id: str = "constant") -> UniformTrace:
    n = len(_times(duration_ms, period_ms))
    r = quat.normalize(rot)
    return UniformTrace(0.0, period_ms, np.tile(np.asarray(pos, float), (n, 1)), np.tile(r, (n, 1)), source_id)


def ramp(duration_ms: float = 2000.0, period_ms: float = 5.0, velocity=(0.2, 0.0, 0.0),
         yaw_rate_deg_s: float = 0.0, origin=(0.0, 0.0, 0.0), source_id: str = "ramp") -> UniformTrace:
    """Constant linear velocity (m/s) and optional constant yaw rate."""
    t = _times(duration_ms, period_ms)
    pos = np.asarray(origin, float) + np.outer(t / 1000.0, velocity)
    yaw = yaw_rate_deg_s * t / 1000.0
    rot = quat.from_euler(np.column_stack([yaw, np.zeros_like(t), np.zeros_like(t)]))
    return UniformTrace(0.0, period_ms, pos, quat.align_hemisphere(rot), source_id)


def sinusoid(duration_ms: float = 5000.0, period_ms: float = 5.0, amplitude_m: float = 0.1,
             amplitude_deg: float = 20.0, freq_hz: float = 0.5, seed: int = 0,
             source_id: str = "sinusoid") -> UniformTrace:
    rng = np.random.default_rng(seed)
    t = _times(duration_ms, period_ms) / 1000.0
    phases = rng.uniform(0, 2 * np.pi, 6)
    pos = amplitude_m * np.sin(2 * np.pi * freq_hz * t[:, None] + phases[:3])
    ang = amplitude_deg * np.sin(2 * np.pi * freq_hz * t[:, None] + phases[3:])
    return UniformTrace(0.0, period_ms, pos, quat.align_hemisphere(quat.from_euler(ang)), source_id)


def ar_process(n: int = 2000, phi=(0.8,), c: float = 0.0, sigma: float = 0.01, seed: int = 0,
               burn_in: int = 500) -> np.ndarray:
    """Simulate a scalar AR process; ``phi[0]`` multiplies the newest lag."""
    rng = np.random.default_rng(seed)
    phi = np.asarray(phi, float)
    p = len(phi)
    y = np.zeros(n + burn_in + p)
    eps = rng.normal(0.0, sigma, len(y))
    for t in range(p, len(y)):
        y[t] = c + phi @ y[t - p:t][::-1] + eps[t]
    return y[-n:]


def ar_trace(duration_ms: float = 10000.0, period_ms: float = 5.0, phi=(0.8,), sigma: float = 0.01,
             seed: int = 0, source_id: str = "ar") -> UniformTrace:
    """Every position channel and every Euler angle (degrees) an independent AR process."""
    n = len(_times(duration_ms, period_ms))
    pos = np.column_stack([ar_process(n, phi, sigma=sigma, seed=seed + k) for k in range(3)])
    ang = np.column_stack([ar_process(n, phi, sigma=100 * sigma, seed=seed + 3 + k) for k in range(3)])
    return UniformTrace(0.0, period_ms, pos, quat.align_hemisphere(quat.from_euler(ang)), source_id)


def head_motion(duration_ms: float = 20000.0, period_ms: float = 5.0, seed: int = 0,
                noise_m: float = 5e-4, noise_deg: float = 0.05,
                source_id: str | None = None) -> UniformTrace:
    """Head-like motion: a few random low-frequency sinusoids per axis plus
    white sensor noise."""
    rng = np.random.default_rng(seed)
    t = _times(duration_ms, period_ms) / 1000.0
    n_terms = 4
    freqs = rng.uniform(0.05, 0.8, (6, n_terms))
    phases = rng.uniform(0, 2 * np.pi, (6, n_terms))
    amps = rng.uniform(0.3, 1.0, (6, n_terms)) / np.arange(1, n_terms + 1)
    waves = np.einsum("ck,tck->tc", amps, np.sin(2 * np.pi * freqs[None] * t[:, None, None] + phases[None]))
    pos = np.array([0.0, 1.6, 0.0]) + 0.15 * waves[:, :3] + rng.normal(0.0, noise_m, (len(t), 3))
    ang = np.array([35.0, 12.0, 6.0]) * waves[:, 3:] + rng.normal(0.0, noise_deg, (len(t), 3))
    rot = quat.align_hemisphere(quat.from_euler(ang))
    return UniformTrace(0.0, period_ms, pos, rot, source_id or f"head{seed}")


def jittered_raw(trace: UniformTrace, rate_hz: float = 60.0, jitter: float = 0.3, seed: int = 0) -> RawTrace:
    """Sub-sample a dense trace at an uneven, roughly ``rate_hz`` cadence."""
    rng = np.random.default_rng(seed)
    mean_step = 1000.0 / rate_hz / trace.period_ms
    idx = [0]
    while True:
        step = max(1, int(round(mean_step * (1 + rng.uniform(-jitter, jitter)))))
        if idx[-1] + step >= len(trace):
            break
        idx.append(idx[-1] + step)
    idx = np.array(idx)
    return RawTrace(trace.times[idx], trace.pos[idx], trace.rot[idx], trace.source_id)


def generate(kind: str, seed: int = 0, duration_ms: float | None = None, period_ms: float = 5.0,
             source_id: str | None = None) -> UniformTrace:
    """Dispatch used by the CLI ``synth`` subcommand."""
    kw = {"period_ms": period_ms}
    if duration_ms is not None:
        kw["duration_ms"] = duration_ms
    if kind == "constant":
        tr = constant(**kw)
    elif kind == "ramp":
        tr = ramp(**kw)
    elif kind == "sinusoid":
        tr = sinusoid(seed=seed, **kw)
    elif kind == "ar":
        tr = ar_trace(seed=seed, **kw)
    elif kind == "head":
        tr = head_motion(seed=seed, **kw)
    else:
        raise ValueError(f"unknown synthetic trace kind {kind!r}; choose from {', '.join(KINDS)}")
    if source_id:
        tr = UniformTrace(tr.t0, tr.period_ms, tr.pos, tr.rot, source_id)
    return tr

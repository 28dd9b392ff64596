"""Motion-to-photon latency budget.

    T_M2P     = T_server + T_network + T_client
    T_server  = T_rend + T_enc
    T_network = T_up + T_down + T_trans
    T_client  = T_dec + T_disp

Tracker latency is treated as zero. All values are milliseconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class LatencyBudget:
    t_rend: float = 0.0
    t_enc: float = 0.0
    t_up: float = 0.0
    t_down: float = 0.0
    t_trans: float = 0.0
    t_dec: float = 0.0
    t_disp: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ConfigError(f"{f.name} must be a finite non-negative number of ms, got {v!r}")

    @property
    def t_server(self) -> float:
        return self.t_rend + self.t_enc

    @property
    def t_network(self) -> float:
        return self.t_up + self.t_down + self.t_trans

    @property
    def t_client(self) -> float:
        return self.t_dec + self.t_disp

    def scaled(self, k: float) -> "LatencyBudget":
        return LatencyBudget(**{name: k * v for name, v in asdict(self).items()})


@dataclass(frozen=True)
class EncoderProfile:
    name: str
    mean_fps: float

    def __post_init__(self):
        if not (isinstance(self.mean_fps, (int, float)) and self.mean_fps > 0 and math.isfinite(self.mean_fps)):
            raise ConfigError(f"encoder {self.name!r}: mean_fps must be positive, got {self.mean_fps!r}")


# Mean encoder throughput over the JVET test sequences, low-latency presets.
ENCODER_PROFILES = {
    p.name: p
    for p in (
        EncoderProfile("x264_ultrafast", 81),
        EncoderProfile("nvenc_h264_default", 353),
        EncoderProfile("nvenc_h264_hp", 465),
        EncoderProfile("nvenc_h264_ll", 359),
        EncoderProfile("nvenc_h264_llhp", 281),
        EncoderProfile("x265_ultrafast", 33),
        EncoderProfile("svt_hevc_low_delay_p", 74),
        EncoderProfile("nvenc_hevc_default", 212),
        EncoderProfile("nvenc_hevc_hp", 492),
        EncoderProfile("nvenc_hevc_ll", 278),
        EncoderProfile("nvenc_hevc_llhp", 211),
    )
}


def total_m2p(b: LatencyBudget) -> float:
    return b.t_server + b.t_network + b.t_client


def breakdown(b: LatencyBudget) -> dict:
    return {
        **asdict(b),
        "t_server": b.t_server,
        "t_network": b.t_network,
        "t_client": b.t_client,
        "t_m2p": total_m2p(b),
    }


def encode_latency(profile: EncoderProfile) -> float:
    """Mean per-frame encode time implied by the encoder throughput."""
    return 1000.0 / profile.mean_fps


def display_latency(refresh_hz: float, mode: str = "average") -> float:
    """Average case waits half a refresh period, worst case a full one."""
    if not refresh_hz > 0:
        raise ConfigError(f"refresh rate must be positive, got {refresh_hz!r}")
    if mode == "average":
        return 500.0 / refresh_hz
    if mode == "worst":
        return 1000.0 / refresh_hz
    raise ConfigError(f"display mode must be 'average' or 'worst', got {mode!r}")


def resolve_encoder(spec, profiles: dict | None = None) -> EncoderProfile:
    profiles = ENCODER_PROFILES if profiles is None else profiles
    if isinstance(spec, EncoderProfile):
        return spec
    if isinstance(spec, str):
        try:
            return profiles[spec]
        except KeyError:
            raise ConfigError(f"unknown encoder profile {spec!r}; known: {', '.join(sorted(profiles))}") from None
    if isinstance(spec, dict):
        return EncoderProfile(str(spec.get("name", "custom")), spec.get("mean_fps"))
    raise ConfigError(f"cannot interpret encoder {spec!r}")


def budget_from_config(cfg: dict) -> LatencyBudget:
    """Build a budget from ``{budget: {...}, encoder, refresh_hz, display_mode}``.

    An ``encoder`` entry sets ``t_enc`` and ``refresh_hz`` sets ``t_disp``;
    both override the corresponding explicit budget fields.
    """
    known = {f.name for f in fields(LatencyBudget)}
    raw = dict(cfg.get("budget") or {})
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown budget components: {sorted(unknown)}")
    budget = LatencyBudget(**raw)
    profiles = dict(ENCODER_PROFILES)
    for extra in cfg.get("profiles", []):
        p = resolve_encoder(extra)
        profiles[p.name] = p
    if cfg.get("encoder") is not None:
        budget = replace(budget, t_enc=encode_latency(resolve_encoder(cfg["encoder"], profiles)))
    if cfg.get("refresh_hz") is not None:
        budget = replace(budget, t_disp=display_latency(cfg["refresh_hz"], cfg.get("display_mode", "average")))
    return budget


def load_config(path) -> dict:
    return json.loads(Path(path).read_text())

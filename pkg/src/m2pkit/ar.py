"""Scalar autoregressive models: conditional least-squares fit, AIC order
selection and iterated point forecasts.

An AR(rho) model predicts

    y_t = c + phi_1 * y_{t-1} + ... + phi_rho * y_{t-rho}

with the noise term taken at its zero mean when forecasting.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, LengthMismatchError

DEFAULT_LAG_ORDER = 32
_INTERCEPT_SCALE = 1e-3


@dataclass(frozen=True)
class ArModel:
    rho: int
    c: float
    phi: tuple[float, ...]
    sigma2: float = 0.0
    trained_on: str = ""
    _phi_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        phi = tuple(float(p) for p in self.phi)
        if self.rho < 1 or len(phi) != self.rho:
            raise ValueError(f"phi has {len(phi)} coefficients but rho={self.rho}")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be non-negative")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        arr = np.array(phi)
        arr.setflags(write=False)
        object.__setattr__(self, "_phi_arr", arr)

    @classmethod
    def persistence(cls, rho: int = 1, trained_on: str = "persistence") -> "ArModel":
        """Model that repeats the newest value: phi = (1, 0, ..., 0), c = 0."""
        return cls(rho, 0.0, (1.0,) + (0.0,) * (rho - 1), 0.0, trained_on)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("_phi_arr")
        d["phi"] = list(self.phi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArModel":
        return cls(int(d["rho"]), d["c"], tuple(d["phi"]), d.get("sigma2", 0.0), d.get("trained_on", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ArModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_series(series) -> np.ndarray:
    y = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    return y


def _lagged_design(y: np.ndarray, rho: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    # column i-1 holds y_{t-i} for targets t = start .. n-1
    n = len(y)
    lags = np.column_stack([y[start - i:n - i] for i in range(1, rho + 1)])
    return lags, y[start:]


def _fit_from(y: np.ndarray, rho: int, start: int) -> tuple[float, np.ndarray, float]:
    lags, target = _lagged_design(y, rho, start)
    # Solve for the offset from the persistence model (phi = e1, c = 0) on
    # mean-centred lags. For full-rank designs this is plain OLS. For
    # rank-deficient ones the minimum-norm offset keeps constant channels
    # (including all-zero ones) forecasting their own value exactly, and the
    # down-weighted intercept column makes the solver prefer lag weights over
    # an intercept, so a perfect ramp yields a slope-agnostic extrapolator.
    m = float(np.mean(y))
    X = np.column_stack([np.full(len(target), _INTERCEPT_SCALE), lags - m])
    beta, *_ = np.linalg.lstsq(X, target - lags[:, 0], rcond=None)
    delta = beta[1:]
    phi = delta.copy()
    phi[0] += 1.0
    c = float(beta[0] * _INTERCEPT_SCALE - m * np.sum(delta))
    resid = target - (c + lags @ phi)
    sigma2 = float(np.mean(resid ** 2))
    return c, phi, sigma2


def _check_length(y: np.ndarray, rho: int) -> None:
    if rho < 1:
        raise ValueError("lag order must be a positive integer")
    if len(y) < 2 * rho + 1:
        raise InsufficientDataError(
            f"need at least {2 * rho + 1} samples to fit an AR({rho}) model, got {len(y)}"
        )


def fit(series, rho: int = DEFAULT_LAG_ORDER, trained_on: str = "") -> ArModel:
    """Conditional least-squares fit with intercept.

    Rank-deficient designs (constant or perfectly linear series) resolve to
    the minimum-norm solution rather than failing.
    """
    y = _as_series(series)
    _check_length(y, rho)
    c, phi, sigma2 = _fit_from(y, rho, rho)
    return ArModel(rho, c, tuple(phi), sigma2, trained_on)


def aic_table(series, rho_max: int) -> dict[int, float]:
    """AIC for every order 1..rho_max on a common estimation sample."""
    y = _as_series(series)
    _check_length(y, rho_max)
    n_eff = len(y) - rho_max
    table = {}
    for rho in range(1, rho_max + 1):
        _, _, sigma2 = _fit_from(y, rho, rho_max)
        loglik_term = n_eff * math.log(sigma2) if sigma2 > 0 else -math.inf
        table[rho] = loglik_term + 2.0 * (rho + 1)
    return table


def select_lag_aic(series, rho_max: int) -> int:
    table = aic_table(series, rho_max)
    best = 1
    for rho, score in table.items():
        if score < table[best]:
            best = rho
    return best


def forecast_one(model: ArModel, history) -> float | np.ndarray:
    """One-step forecast from the last ``rho`` values (newest last).

    ``history`` may be stacked with shape ``(..., rho)``.
    """
    out = forecast_multi(model, history, 1)[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def forecast_multi(model: ArModel, history, steps: int) -> np.ndarray:
    """Iterated forecasts: each prediction is appended to the window and
    fed back. Returns shape ``(..., steps)``; entry k-1 is the k-step-ahead value.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    h = np.asarray(history, dtype=float)
    if h.shape[-1:] != (model.rho,):
        raise LengthMismatchError(f"history must hold exactly {model.rho} values, got shape {h.shape}")
    rho = model.rho
    phi_rev = model._phi_arr[::-1]
    buf = np.empty(h.shape[:-1] + (rho + steps,))
    buf[..., :rho] = h
    for k in range(steps):
        buf[..., rho + k] = model.c + buf[..., k:rho + k] @ phi_rev
    return buf[..., rho:]

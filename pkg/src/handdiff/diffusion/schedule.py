"""Noise schedule: beta sequence and every derived quantity the forward and
reverse processes need. Arrays are float64, indexed by t-1 for t in [1, T];
the convention alpha_bar(0) = 1 closes the final reverse step."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InputError

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    betas: np.ndarray                 # (T,)
    alphas: np.ndarray                # (T,)  1 - beta
    alpha_bars: np.ndarray            # (T,)  cumulative products
    posterior_variances: np.ndarray   # (T,)  beta_tilde
    posterior_coef_x0: np.ndarray     # (T,)  coefficient of predicted x0
    posterior_coef_xt: np.ndarray     # (T,)  coefficient of x_t

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def check_t(self, t: int) -> None:
        if not (1 <= t <= self.T):
            raise InputError(f"t must be in [1, {self.T}], got {t}")

    def alpha_bar(self, t: int) -> float:
        """alpha_bar with the closing convention alpha_bar(0) = 1."""
        if t == 0:
            return 1.0
        self.check_t(t)
        return float(self.alpha_bars[t - 1])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(self.betas.astype("<f8").tobytes())
        return h.hexdigest()[:16]


def make_schedule(T: int, kind: str = "linear",
                  beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Build a schedule of T steps; "linear" or "cosine"."""
    if T < 2:
        raise ConfigurationError(f"T must be >= 2, got {T}")
    if kind == "linear":
        if not (0.0 < beta_start <= beta_end < 1.0):
            raise ConfigurationError(
                f"beta endpoints must satisfy 0 < start <= end < 1, got "
                f"({beta_start}, {beta_end})")
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    elif kind == "cosine":
        # squared-cosine alpha_bar profile, betas clipped below 0.999
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + 0.008) / 1.008 * np.pi / 2.0) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], 1e-8, 0.999)
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    prev = np.concatenate([[1.0], alpha_bars[:-1]])
    posterior_var = betas * (1.0 - prev) / (1.0 - alpha_bars)
    coef_x0 = np.sqrt(prev) * betas / (1.0 - alpha_bars)
    coef_xt = np.sqrt(alphas) * (1.0 - prev) / (1.0 - alpha_bars)
    return NoiseSchedule(kind=kind, betas=betas, alphas=alphas,
                         alpha_bars=alpha_bars,
                         posterior_variances=posterior_var,
                         posterior_coef_x0=coef_x0, posterior_coef_xt=coef_xt)

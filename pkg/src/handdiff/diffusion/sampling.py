"""Forward noising and reverse-step machinery for the x0-predicting model.

Every function takes scalar coefficients from the schedule and works on
numpy arrays and torch tensors alike. Randomness always flows through a
numpy Generator so trajectories are bitwise reproducible regardless of the
tensor backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InputError, ModelError
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class SamplerConfig:
    num_steps: int = 10        # reverse sub-sequence length
    eta: float = 0.0           # DDIM stochasticity; 1 matches ancestral sampling
    guidance_scale: float = 1.0
    hypotheses: int = 1
    seed: int = 0
    method: str = "ddim"       # "ddim" | "ddpm" (ddpm forces the full T chain)

    def validate(self, schedule: NoiseSchedule) -> None:
        if not (1 <= self.num_steps <= schedule.T):
            raise ConfigurationError(
                f"num_steps must be in [1, {schedule.T}], got {self.num_steps}")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigurationError(f"eta must be in [0, 1], got {self.eta}")
        if self.guidance_scale < 0:
            raise ConfigurationError(
                f"guidance scale must be >= 0, got {self.guidance_scale}")
        if self.hypotheses < 1:
            raise ConfigurationError(
                f"hypotheses must be >= 1, got {self.hypotheses}")
        if self.method not in ("ddim", "ddpm"):
            raise ConfigurationError(f"unknown method {self.method!r}")


def _noise_like(x, rng: np.random.Generator):
    noise = rng.standard_normal(tuple(x.shape))
    if isinstance(x, np.ndarray):
        return noise.astype(x.dtype, copy=False)
    import torch
    return torch.from_numpy(noise).to(dtype=x.dtype, device=x.device)


def q_sample(x0, t: int, noise, schedule: NoiseSchedule):
    """Closed-form forward marginal: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise."""
    schedule.check_t(t)
    ab = schedule.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def posterior_mean(x0_pred, x_t, t: int, schedule: NoiseSchedule):
    """Mean of the exact Gaussian posterior given the predicted x0."""
    schedule.check_t(t)
    return schedule.posterior_coef_x0[t - 1] * x0_pred \
        + schedule.posterior_coef_xt[t - 1] * x_t


def guided_mean(mu, sigma_sq: float, guidance_gradient, scale: float):
    """Reverse-mean bias: mu - scale * sigma_sq * gradient."""
    if scale < 0:
        raise InputError(f"guidance scale must be >= 0, got {scale}")
    if scale == 0.0:
        return mu
    return mu - (scale * sigma_sq) * guidance_gradient


def ddpm_step(x_t, t: int, x0_pred, schedule: NoiseSchedule,
              rng: np.random.Generator, guidance_gradient=None,
              guidance_scale: float = 0.0):
    """Ancestral reverse step: sample from N(mu_t, Sigma_t I); no noise at t=1."""
    schedule.check_t(t)
    mu = posterior_mean(x0_pred, x_t, t, schedule)
    var = float(schedule.posterior_variances[t - 1])
    if guidance_gradient is not None:
        mu = guided_mean(mu, var, guidance_gradient, guidance_scale)
    if t == 1:
        return mu
    return mu + math.sqrt(var) * _noise_like(x_t, rng)


def jump_variance(t: int, t_prev: int, schedule: NoiseSchedule) -> float:
    """Posterior variance of the t -> t_prev jump (the eta=1 DDIM variance).

    Used as the noise-level-matched Sigma for guidance on DDIM sub-steps;
    equals beta_tilde_t when t_prev = t - 1.
    """
    ab_t = schedule.alpha_bar(t)
    ab_p = schedule.alpha_bar(t_prev)
    return (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p)


def ddim_step(x_t, t: int, t_prev: int, x0_pred, eta: float,
              schedule: NoiseSchedule, rng: np.random.Generator,
              guidance_gradient=None, guidance_scale: float = 0.0):
    """Accelerated reverse step from the x0 parameterization.

    eta = 0 is deterministic; eta = 1 with t_prev = t - 1 matches the
    ancestral step in distribution. Guidance biases the deterministic part
    by -scale * jump_variance * gradient.
    """
    schedule.check_t(t)
    if not (0 <= t_prev < t):
        raise InputError(f"need 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
    ab_t = schedule.alpha_bar(t)
    ab_p = schedule.alpha_bar(t_prev)
    sigma = eta * math.sqrt(jump_variance(t, t_prev, schedule))
    eps_pred = (x_t - math.sqrt(ab_t) * x0_pred) / math.sqrt(1.0 - ab_t)
    coef_eps = math.sqrt(max(1.0 - ab_p - sigma ** 2, 0.0))
    out = math.sqrt(ab_p) * x0_pred + coef_eps * eps_pred
    if guidance_gradient is not None:
        out = guided_mean(out, jump_variance(t, t_prev, schedule),
                          guidance_gradient, guidance_scale)
    if sigma > 0.0 and t_prev > 0:
        out = out + sigma * _noise_like(x_t, rng)
    return out


def timestep_sequence(schedule: NoiseSchedule, num_steps: int) -> list[int]:
    """Descending uniform-stride sub-sequence of [1, T], starting at T."""
    ts = np.round(np.linspace(schedule.T, 1, num_steps)).astype(int)
    out = []
    for t in ts:
        if not out or t < out[-1]:
            out.append(int(t))
    return out


def hypothesis_rng(seed: int, index: int) -> np.random.Generator:
    """Independent substream for hypothesis ``index``."""
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def sample(denoiser, condition_tokens, schedule: NoiseSchedule,
           config: SamplerConfig, shape: tuple, guidance=None,
           callback=None):
    """Run the reverse chain for ``config.hypotheses`` independent noises.

    ``denoiser(x_t, t, condition_tokens) -> x0_pred`` supplies the model;
    ``guidance(x_t, t, hypothesis_index) -> gradient`` (optional) supplies
    the condition-aligned bias term. Hypotheses use substreams derived
    from (seed, index), so a prefix of a larger hypothesis set reproduces
    a smaller run exactly. Returns a list of final states (backend matches
    the denoiser output).
    """
    config.validate(schedule)
    if config.method == "ddpm":
        ts = list(range(schedule.T, 0, -1))
    else:
        ts = timestep_sequence(schedule, config.num_steps)
    outputs = []
    for i in range(config.hypotheses):
        rng = hypothesis_rng(config.seed, i)
        x = _noise_like(np.zeros(shape, dtype=np.float64), rng)
        for k, t in enumerate(ts):
            x0_pred = denoiser(x, t, condition_tokens)
            if k == 0 and tuple(x0_pred.shape) != tuple(x.shape):
                raise ModelError(
                    f"denoiser output shape {tuple(x0_pred.shape)} != "
                    f"input {shape}")
            grad = None
            if guidance is not None and config.guidance_scale > 0.0:
                grad = guidance(x, t, i)
            t_prev = ts[k + 1] if k + 1 < len(ts) else 0
            if config.method == "ddpm":
                x = ddpm_step(x, t, x0_pred, schedule, rng,
                              guidance_gradient=grad,
                              guidance_scale=config.guidance_scale)
            else:
                x = ddim_step(x, t, t_prev, x0_pred, config.eta, schedule, rng,
                              guidance_gradient=grad,
                              guidance_scale=config.guidance_scale)
            if callback is not None:
                callback(i, t, x)
        outputs.append(x)
    return outputs

"""Forward noising, reverse samplers and guidance-biased means."""

from .sampling import (SamplerConfig, ddim_step, ddpm_step, guided_mean,
                       hypothesis_rng, jump_variance, posterior_mean, q_sample,
                       sample, timestep_sequence)
from .schedule import NoiseSchedule, make_schedule

__all__ = [
    "NoiseSchedule", "make_schedule", "SamplerConfig", "q_sample",
    "posterior_mean", "guided_mean", "ddpm_step", "ddim_step", "sample",
    "timestep_sequence", "jump_variance", "hypothesis_rng",
]

"""K-space data-consistency guidance with texture-coordinating repeats.

Each guided reverse step replaces the sampled k-space coefficients of the
model output with a noised copy of the observation, then optionally repeats
the step: the projected state is renoised back up and denoised again, which
reconciles the model's content with the injected measurements. During the
final refinement phase the observation is used as acquired, without noise,
which pins the sampled coefficients of the output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import Denoiser, NoiseSchedule, noise_like, reverse_transition
from .kspace import (
    SamplingMask,
    channels_to_complex,
    complex_to_channels,
    fft2c,
    ifft2c,
)


@dataclass(frozen=True)
class GuidanceConfig:
    """Measurement context for guided sampling: repeats K, mask, observation."""

    repeats: int
    mask: SamplingMask
    observation: np.ndarray

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        obs = np.asarray(self.observation, dtype=np.complex128)
        if obs.shape != self.mask.shape:
            raise ValueError(f"observation shape {obs.shape} != mask shape {self.mask.shape}")
        object.__setattr__(self, "observation", obs)


def noise_observation(
    x_obs: np.ndarray,
    t: int,
    s: NoiseSchedule,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Simulate the observation's diffusion state at step t.

    Adds the transform of real-valued image-domain noise with variance
    1 - alpha_bar(t); the orthonormal FFT keeps the per-coefficient total
    complex variance at that value. Level 0 returns the observation as is.
    """
    x_obs = np.asarray(x_obs)
    var = 1.0 - s.alpha_bar_at(t)
    if var == 0.0:
        return x_obs
    if rng is None:
        raise ValueError("rng required for a noisy observation level")
    eta = np.sqrt(var) * rng.standard_normal(x_obs.shape)
    return x_obs + fft2c(eta)


def data_consistency(y_prime: np.ndarray, x_obs_t: np.ndarray, m: SamplingMask) -> np.ndarray:
    """Replace sampled k-space coefficients of y' with the observation's."""
    y_prime = np.asarray(y_prime)
    x_obs_t = np.asarray(x_obs_t)
    if y_prime.shape != m.shape or x_obs_t.shape != m.shape:
        raise ValueError(
            f"shape mismatch: y' {y_prime.shape}, observation {x_obs_t.shape}, mask {m.shape}"
        )
    mixed = np.where(m.as_bool(), x_obs_t, fft2c(y_prime))
    return ifft2c(mixed)


def renoise(
    y_prev: np.ndarray,
    t_from: int,
    t_to: int,
    s: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Jump a state forward in noise level from ``t_from`` up to ``t_to``."""
    t_from = int(t_from)
    t_to = int(t_to)
    if not (0 <= t_from < t_to <= s.T):
        raise ValueError(f"invalid renoise {t_from} -> {t_to} for T={s.T}")
    ratio = s.alpha_bar_at(t_to) / s.alpha_bar_at(t_from)
    y_prev = np.asarray(y_prev)
    return np.sqrt(ratio) * y_prev + np.sqrt(1.0 - ratio) * noise_like(rng, y_prev)


def guided_step(
    y_t: np.ndarray,
    t: int,
    t_next: int,
    d: Denoiser,
    p: GuidanceConfig,
    s: NoiseSchedule,
    rng: np.random.Generator,
    *,
    refine: bool = False,
) -> np.ndarray:
    """Reverse transition t -> t_next with data consistency, repeated K times.

    Per repeat: predict noise, take the (stride-aware) reverse transition,
    project onto the measurements at level ``t_next``, and, unless this was
    the last repeat, renoise back up to t. Observation noise is drawn fresh
    on every repeat; with ``refine=True`` the raw observation is used instead.
    """
    if not (0 <= t_next < t <= s.T):
        raise ValueError(f"invalid step pair {t} -> {t_next} for T={s.T}")
    y_t = np.asarray(y_t, dtype=np.complex128)
    y_next = y_t
    for repeat in range(p.repeats):
        eps_hat = channels_to_complex(d.predict_noise(complex_to_channels(y_t), t))
        y_prime = reverse_transition(y_t, eps_hat, t, t_next, s, rng)
        obs_t = p.observation if refine else noise_observation(p.observation, t_next, s, rng)
        y_next = data_consistency(y_prime, obs_t, p.mask)
        if repeat + 1 < p.repeats:
            y_t = renoise(y_next, t_next, t, s, rng)
    return y_next


def consistency_residual(y0: np.ndarray, x_obs: np.ndarray, m: SamplingMask) -> float:
    """max |M (F(y0) - x_obs)|: how far the output strays from the data."""
    diff = (fft2c(np.asarray(y0)) - np.asarray(x_obs)) * m.as_array()
    return float(np.abs(diff).max())

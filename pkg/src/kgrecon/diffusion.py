"""DDPM noise schedule and forward/reverse diffusion algebra.

Steps are 1-based: t runs over {1, ..., T}, and level 0 denotes the clean
state (``alpha_bar_at(0) == 1``). Complex arrays are treated as two real
channels, so "standard normal" noise on a complex array means independent
N(0, 1) draws for the real and imaginary parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

DEFAULT_STEPS = 4000
_REFERENCE_STEPS = 1000
_REFERENCE_BETA_MIN = 1e-4
_REFERENCE_BETA_MAX = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha/alpha_bar arrays of a DDPM noising chain."""

    beta: np.ndarray
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-D array")
        if not ((beta > 0.0) & (beta < 1.0)).all():
            raise ValueError("beta entries must lie in (0, 1)")
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if not (np.diff(ab) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] <= 0.0:
            raise ValueError("alpha_bar[T] must stay positive")

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def _check_step(self, t: int, lowest: int) -> int:
        t = int(t)
        if not (lowest <= t <= self.T):
            raise ValueError(f"step {t} out of range [{lowest}, {self.T}]")
        return t

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check_step(t, 1) - 1])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._check_step(t, 1) - 1])

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative signal retention at step t; level 0 is noise-free."""
        t = self._check_step(t, 0)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def build_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Linear beta ramp from ``beta_min`` to ``beta_max`` over T steps."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    beta = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def default_schedule(T: int = DEFAULT_STEPS) -> NoiseSchedule:
    """Linear schedule with endpoints scaled by (1000 / T).

    Scaling keeps the total amount of noising comparable to the common
    1000-step ramp (1e-4 .. 0.02) when T differs.
    """
    scale = _REFERENCE_STEPS / T
    return build_schedule(T, _REFERENCE_BETA_MIN * scale, _REFERENCE_BETA_MAX * scale)


class Denoiser(Protocol):
    """Noise-prediction interface consumed by every sampler.

    ``y`` is a (2, H, W) float array (real and imaginary channel of the
    current state); the return value has the same shape. Implementations must
    be deterministic for fixed inputs.
    """

    def predict_noise(self, y: np.ndarray, t: int) -> np.ndarray: ...


def noise_like(rng: np.random.Generator, template: np.ndarray) -> np.ndarray:
    """Standard normal draw matching ``template``'s shape and realness.

    For complex templates the real block is drawn before the imaginary block;
    callers rely on this order for reproducible streams.
    """
    if np.iscomplexobj(template):
        return rng.standard_normal(template.shape) + 1j * rng.standard_normal(template.shape)
    return rng.standard_normal(template.shape)


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Noise a clean state to step t: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {eps.shape}")
    ab = s.alpha_bar_at(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0(y_t: np.ndarray, eps_hat: np.ndarray, t: int, s: NoiseSchedule) -> np.ndarray:
    """Invert :func:`forward_noise` given a noise estimate."""
    ab = s.alpha_bar_at(t)
    return (np.asarray(y_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


def reverse_transition(
    y_t: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    t_next: int,
    s: NoiseSchedule,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """One ancestral reverse jump from step t down to ``t_next`` < t.

    Uses the DDPM posterior over the stride: the product of alphas across
    (t_next, t] plays the role of the single-step alpha. The injected noise
    variance is the posterior variance, which vanishes when ``t_next`` is 0,
    so the final jump is deterministic.
    """
    t = int(t)
    t_next = int(t_next)
    if not (0 <= t_next < t <= s.T):
        raise ValueError(f"invalid transition {t} -> {t_next} for T={s.T}")
    ab_t = s.alpha_bar_at(t)
    ab_n = s.alpha_bar_at(t_next)
    alpha_eff = ab_t / ab_n
    beta_eff = 1.0 - alpha_eff

    x0_hat = predict_x0(y_t, eps_hat, t, s)
    mean = (
        np.sqrt(ab_n) * beta_eff / (1.0 - ab_t) * x0_hat
        + np.sqrt(alpha_eff) * (1.0 - ab_n) / (1.0 - ab_t) * np.asarray(y_t)
    )
    var = (1.0 - ab_n) / (1.0 - ab_t) * beta_eff
    if var > 0.0:
        if rng is None:
            raise ValueError("rng required for a stochastic transition")
        mean = mean + np.sqrt(var) * noise_like(rng, mean)
    return mean


def reverse_step(
    y_t: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    s: NoiseSchedule,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Unit-stride reverse update t -> t-1 (deterministic at t = 1)."""
    return reverse_transition(y_t, eps_hat, t, t - 1, s, rng)

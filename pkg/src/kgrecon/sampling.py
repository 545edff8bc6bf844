"""Coarse-to-fine sampling: strided parallel chains, averaging, refinement.

N independent chains run down a stride-compressed schedule with guided steps,
their results are averaged, and the average is renoised to a shallow level
and refined at unit stride with the observation injected as acquired. Every
chain owns a counter-based random stream split from the seed, so results are
bit-identical no matter how the chains are scheduled across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from time import perf_counter
from typing import MutableMapping, Sequence

import numpy as np

from .diffusion import Denoiser, NoiseSchedule
from .errors import NumericalError
from .guidance import GuidanceConfig, guided_step, renoise
from .kspace import SamplingMask

_CHAIN_STREAM = 0
_REFINE_STREAM = 1


@dataclass(frozen=True)
class ReconstructionConfig:
    """Sampler hyperparameters: stride k, N chains, refinement depth, repeats K."""

    stride: int = 40
    num_samples: int = 4
    refine_steps: int = 200
    tc_repeats: int = 3
    seed: int = 0

    def validate(self, T: int) -> None:
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not (1 <= self.stride <= T):
            raise ValueError(f"stride must lie in [1, {T}]")
        if not (0 <= self.refine_steps <= T):
            raise ValueError(f"refine_steps must lie in [0, {T}]")
        if self.tc_repeats < 1:
            raise ValueError("tc_repeats must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def split_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for a (seed, path) pair."""
    seq = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def build_coarse_schedule(T: int, k: int) -> list[int]:
    """Strictly decreasing levels {T, T-k, T-2k, ...}, guaranteed to end at 1."""
    if not (1 <= k <= T):
        raise ValueError(f"stride k must lie in [1, {T}]")
    levels = list(range(T, 0, -k))
    if levels[-1] != 1:
        levels.append(1)
    return levels


def average_samples(samples: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise arithmetic mean of equally shaped samples."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    first = np.asarray(samples[0])
    for s in samples[1:]:
        if np.asarray(s).shape != first.shape:
            raise ValueError("samples must share one shape")
    return np.mean(np.stack([np.asarray(s) for s in samples]), axis=0)


def _check_finite(y: np.ndarray, stage: str) -> None:
    if not np.isfinite(y).all():
        raise NumericalError(f"non-finite state detected during {stage}")


def coarse_to_fine_sample(
    d: Denoiser,
    x_obs: np.ndarray,
    m: SamplingMask,
    cfg: ReconstructionConfig,
    s: NoiseSchedule,
    *,
    threads: int = 1,
    timings: MutableMapping[str, float] | None = None,
) -> np.ndarray:
    """Full conditioned sampling run; returns the refined clean state.

    Chain c draws all of its randomness from ``split_rng(seed, 0, c)`` and the
    refinement phase from ``split_rng(seed, 1)``; ``threads`` only bounds the
    executor and cannot change the result.
    """
    cfg.validate(s.T)
    x_obs = np.asarray(x_obs, dtype=np.complex128)
    if x_obs.shape != m.shape:
        raise ValueError(f"observation shape {x_obs.shape} != mask shape {m.shape}")
    guidance = GuidanceConfig(repeats=cfg.tc_repeats, mask=m, observation=x_obs)
    levels = build_coarse_schedule(s.T, cfg.stride) + [0]

    def run_chain(c: int) -> np.ndarray:
        rng = split_rng(cfg.seed, _CHAIN_STREAM, c)
        y = rng.standard_normal(x_obs.shape) + 1j * rng.standard_normal(x_obs.shape)
        for t, t_next in zip(levels[:-1], levels[1:]):
            y = guided_step(y, t, t_next, d, guidance, s, rng)
            _check_finite(y, f"chain {c} at level {t_next}")
        return y

    start = perf_counter()
    if threads > 1 and cfg.num_samples > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chains = list(pool.map(run_chain, range(cfg.num_samples)))
    else:
        chains = [run_chain(c) for c in range(cfg.num_samples)]
    y_avg = average_samples(chains)
    coarse_elapsed = perf_counter() - start

    start = perf_counter()
    y = y_avg
    if cfg.refine_steps > 0:
        rng = split_rng(cfg.seed, _REFINE_STREAM)
        y = renoise(y_avg, 0, cfg.refine_steps, s, rng)
        for t in range(cfg.refine_steps, 0, -1):
            y = guided_step(y, t, t - 1, d, guidance, s, rng, refine=True)
            _check_finite(y, f"refinement at level {t - 1}")
    if timings is not None:
        timings["coarse_s"] = coarse_elapsed
        timings["refine_s"] = perf_counter() - start
    return y

"""Feature-modulation operators for U-Net decoder blocks.

Three operators rebalance a decoder block's two inputs: a spatial scale map
derived from the trunk features' channel mean, applied to the first half of
the trunk channels, and a spectral attenuation of the low frequencies of the
skip features. Reference implementations work on (B, C, H, W) float arrays;
the network applies equivalent tensor versions internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

_FLAT_SPAN = 1e-12


@dataclass(frozen=True)
class ModulationConfig:
    """Per-block modulation factors and which decoder blocks they affect.

    Decoder blocks are indexed from the coarsest resolution (0). The defaults
    amplify the trunk mildly and attenuate only the DC component of the skips.
    """

    backbone_scale: float = 1.2
    skip_scale: float = 0.9
    radius: float = 1.0
    blocks: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        for name in ("backbone_scale", "skip_scale", "radius"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))

    @classmethod
    def identity(cls) -> "ModulationConfig":
        """Factors that make every operator an exact no-op."""
        return cls(backbone_scale=1.0, skip_scale=1.0)


def _check_features(x: np.ndarray, name: str = "features") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must be (B, C, H, W), got shape {x.shape}")
    if np.iscomplexobj(x):
        raise ValueError(f"{name} must be real-valued")
    return x


def backbone_scale_map(x: np.ndarray, factor: float) -> np.ndarray:
    """Per-position scale map in [1, factor] from the channel-mean feature.

    The channel mean is min-max normalized over spatial positions per batch
    item, then mapped affinely so the spatial minimum gets scale 1 and the
    maximum gets ``factor``. A spatially constant mean yields the identity map.
    """
    x = _check_features(x)
    mean = x.mean(axis=1, keepdims=True)
    lo = mean.min(axis=(2, 3), keepdims=True)
    hi = mean.max(axis=(2, 3), keepdims=True)
    span = hi - lo
    flat = span < _FLAT_SPAN
    normalized = (mean - lo) / np.where(flat, 1.0, span)
    return np.where(flat, 1.0, (factor - 1.0) * normalized + 1.0)


def scale_backbone(x: np.ndarray, scale_map: np.ndarray) -> np.ndarray:
    """Multiply the first floor(C/2) channels by the scale map; copy the rest."""
    x = _check_features(x)
    scale_map = np.asarray(scale_map)
    if scale_map.shape != (x.shape[0], 1, x.shape[2], x.shape[3]):
        raise ValueError(
            f"scale map shape {scale_map.shape} incompatible with features {x.shape}"
        )
    out = x.copy()
    half = x.shape[1] // 2
    out[:, :half] *= scale_map
    return out


def attenuate_low_frequencies(h: np.ndarray, scale: float, radius: float) -> np.ndarray:
    """Scale spectrum coefficients within ``radius`` of the centered DC by ``scale``.

    The radius is measured in frequency-index units (Euclidean distance on the
    centered grid), so ``radius=1.0`` touches only the DC coefficient. Applied
    independently per channel; the imaginary residue of the inverse transform
    is verified to be negligible and discarded.
    """
    h = _check_features(h, "skip features")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    _, _, height, width = h.shape
    rows = np.arange(height) - height // 2
    cols = np.arange(width) - width // 2
    dist = np.hypot(rows[:, None], cols[None, :])
    weights = np.where(dist < radius, float(scale), 1.0)
    weights = np.fft.ifftshift(weights)

    spectrum = np.fft.fft2(h, axes=(-2, -1))
    out = np.fft.ifft2(spectrum * weights, axes=(-2, -1))

    signal_norm = np.linalg.norm(h)
    residue = np.linalg.norm(out.imag)
    if signal_norm > 0 and residue > 1e-9 * signal_norm:
        raise NumericalError(
            f"imaginary residue {residue:.3e} exceeds 1e-9 of the signal norm"
        )
    return out.real

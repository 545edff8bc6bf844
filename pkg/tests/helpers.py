"""Shared test utilities: independent oracles and RNG stubs."""

import numpy as np

from kgrecon import SamplingMask


def dft2c_direct(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Centered unitary 2-D DFT by literal kernel summation (no FFT).

    Independent oracle for fft2c/ifft2c: index shifts are explicit rolls and
    the transform is the dense exp-kernel matrix product.
    """
    x = np.asarray(x, dtype=np.complex128)
    h, w = x.shape
    shifted = np.roll(np.roll(x, -(h // 2), axis=0), -(w // 2), axis=1)
    sign = 2j if inverse else -2j
    rows = np.arange(h)
    cols = np.arange(w)
    kernel_h = np.exp(sign * np.pi * np.outer(rows, rows) / h)
    kernel_w = np.exp(sign * np.pi * np.outer(cols, cols) / w)
    out = kernel_h @ shifted @ kernel_w / np.sqrt(h * w)
    return np.roll(np.roll(out, h // 2, axis=0), w // 2, axis=1)


class ZeroRng:
    """Stub generator whose standard normal draws are all zero."""

    def standard_normal(self, size=None):
        return np.zeros(size if size is not None else ())


class RecordingRng:
    """Wrap a real generator and remember every standard normal draw."""

    def __init__(self, rng):
        self.rng = rng
        self.draws = []

    def standard_normal(self, size=None):
        draw = self.rng.standard_normal(size)
        self.draws.append(draw)
        return draw


def full_mask(h: int, w: int) -> SamplingMask:
    return SamplingMask(
        height=h,
        width=w,
        column_flags=np.ones(w, dtype=np.uint8),
        acceleration=1.0,
        center_fraction=1.0,
    )


def empty_mask(h: int, w: int) -> SamplingMask:
    return SamplingMask(
        height=h,
        width=w,
        column_flags=np.zeros(w, dtype=np.uint8),
        acceleration=float(w),
        center_fraction=0.0,
    )


def single_column_mask(h: int, w: int, column: int) -> SamplingMask:
    flags = np.zeros(w, dtype=np.uint8)
    flags[column] = 1
    return SamplingMask(
        height=h,
        width=w,
        column_flags=flags,
        acceleration=float(w),
        center_fraction=0.0,
    )


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

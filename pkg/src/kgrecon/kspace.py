"""Complex images, centered k-space grids, undersampling masks, zero-filling.

Images and k-space grids are plain 2-D complex ndarrays (trailing axes H, W;
stacks of slices are allowed). K-space grids are *centered*: the DC
coefficient sits at index (H//2, W//2). Both Fourier transforms are
orthonormal (1/sqrt(HW) each way), so noise variance and L2 norms are
preserved between domains.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

CPLX_MAGIC = b"CPLX"
MASK_MAGIC = b"MASK"
FORMAT_VERSION = 1


def _check_spatial(a: np.ndarray) -> None:
    if a.ndim < 2:
        raise ValueError(f"expected at least 2 dimensions, got shape {a.shape}")
    if a.shape[-1] == 0 or a.shape[-2] == 0:
        raise ValueError(f"zero-sized spatial dimensions: {a.shape}")


def fft2c(img: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D FFT over the trailing two axes.

    A constant image maps to a single coefficient at the grid center; the
    transform is unitary, so ``norm(fft2c(x)) == norm(x)``.
    """
    img = np.asarray(img)
    _check_spatial(img)
    shifted = np.fft.ifftshift(img, axes=(-2, -1))
    k = np.fft.fft2(shifted, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


def ifft2c(k: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`fft2c` (also unitary)."""
    k = np.asarray(k)
    _check_spatial(k)
    shifted = np.fft.ifftshift(k, axes=(-2, -1))
    img = np.fft.ifft2(shifted, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(img, axes=(-2, -1))


def complex_to_channels(z: np.ndarray) -> np.ndarray:
    """Stack a complex (H, W) array into a real (2, H, W) array (re, im)."""
    z = np.asarray(z)
    return np.stack([z.real, z.imag]).astype(np.float64)


def channels_to_complex(c: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_channels`."""
    c = np.asarray(c)
    if c.shape[0] != 2:
        raise ValueError(f"expected leading channel axis of size 2, got {c.shape}")
    return c[0] + 1j * c[1]


@dataclass(frozen=True)
class SamplingMask:
    """Binary column mask over a k-space grid.

    ``column_flags`` holds one 0/1 flag per column; the mask is constant along
    rows. ``acceleration`` and ``center_fraction`` are carried as metadata.
    """

    height: int
    width: int
    column_flags: np.ndarray
    acceleration: float
    center_fraction: float

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("mask dimensions must be positive")
        flags = np.ascontiguousarray(self.column_flags, dtype=np.uint8)
        if flags.shape != (self.width,):
            raise ValueError(f"column_flags shape {flags.shape} != ({self.width},)")
        if not np.isin(flags, (0, 1)).all():
            raise ValueError("mask flags must be 0 or 1")
        if not (self.acceleration > 0):
            raise ValueError("acceleration must be positive")
        if not (0.0 <= self.center_fraction <= 1.0):
            raise ValueError("center_fraction must lie in [0, 1]")
        flags.setflags(write=False)
        object.__setattr__(self, "column_flags", flags)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def sampled_fraction(self) -> float:
        return float(self.column_flags.mean())

    def as_bool(self) -> np.ndarray:
        """Expand to a full (H, W) boolean array."""
        return np.broadcast_to(self.column_flags.astype(bool), (self.height, self.width))

    def as_array(self, dtype=np.float64) -> np.ndarray:
        """Expand to a full (H, W) array of the given dtype."""
        return np.ascontiguousarray(self.as_bool().astype(dtype))


def default_center_fraction(acceleration: float) -> float:
    """FastMRI-style center fraction: 0.08 at 4x, 0.04 at 8x, clamped outside."""
    if acceleration <= 4.0:
        return 0.08
    if acceleration >= 8.0:
        return 0.04
    return 0.08 + (acceleration - 4.0) * (0.04 - 0.08) / (8.0 - 4.0)


def make_mask(
    h: int,
    w: int,
    acceleration: float,
    center_fraction: float,
    seed: int,
) -> SamplingMask:
    """Random Cartesian column mask.

    The center ``floor(center_fraction * w)`` columns are always sampled; each
    remaining column is kept independently with the probability that makes the
    expected sampled fraction equal ``1 / acceleration``. Deterministic for a
    fixed seed (counter-based Philox stream).
    """
    if h < 1 or w < 1:
        raise ValueError("mask dimensions must be positive")
    if acceleration < 1.0:
        raise ValueError("acceleration must be >= 1")
    if not (0.0 <= center_fraction <= 1.0):
        raise ValueError("center_fraction must lie in [0, 1]")

    num_low = int(center_fraction * w)
    expected = w / acceleration
    if num_low > expected:
        raise ValueError(
            f"infeasible mask: {num_low} center columns exceed the "
            f"{expected:.2f} columns budgeted by acceleration {acceleration:g} "
            "(center_fraction > 1/acceleration)"
        )

    flags = np.zeros(w, dtype=np.uint8)
    pad = (w - num_low + 1) // 2
    flags[pad : pad + num_low] = 1

    if num_low < w:
        p = (expected - num_low) / (w - num_low)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        keep = rng.random(w) < p
        flags[keep & (flags == 0)] = 1

    return SamplingMask(
        height=h,
        width=w,
        column_flags=flags,
        acceleration=float(acceleration),
        center_fraction=float(center_fraction),
    )


def apply_mask(k: np.ndarray, m: SamplingMask) -> np.ndarray:
    """Zero out unsampled columns of a k-space grid."""
    k = np.asarray(k)
    if k.shape[-2:] != m.shape:
        raise ValueError(f"k-space shape {k.shape[-2:]} != mask shape {m.shape}")
    return k * m.as_array()


def zero_fill(k_under: np.ndarray) -> np.ndarray:
    """Baseline reconstruction: inverse FFT with missing coefficients at zero."""
    return ifft2c(k_under)


# ---------------------------------------------------------------------------
# Serialization. CPLX files: magic, u32 version, u32 H, u32 W, then H*W
# interleaved (re, im) little-endian f32 in row-major order. MASK files:
# magic, u32 version, u32 H, u32 W, W bytes of 0/1 column flags, then
# f64 acceleration and f64 center_fraction.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIII")


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _read_header(f, magic: bytes, path) -> tuple[int, int]:
    raw = _read_exact(f, _HEADER.size, "header")
    got_magic, version, h, w = _HEADER.unpack(raw)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if h < 1 or w < 1:
        raise FormatError(f"{path}: invalid dimensions {h}x{w}")
    return h, w


def write_complex(path, img: np.ndarray) -> None:
    """Write a 2-D complex array as a CPLX file."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CPLX_MAGIC, FORMAT_VERSION, h, w))
        f.write(np.ascontiguousarray(img, dtype="<c8").tobytes())


def read_complex(path) -> np.ndarray:
    """Read a CPLX file into a complex128 (H, W) array."""
    with open(path, "rb") as f:
        h, w = _read_header(f, CPLX_MAGIC, path)
        payload = _read_exact(f, h * w * 8, "complex payload")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<c8").astype(np.complex128)
    return values.reshape(h, w)


def write_mask(path, m: SamplingMask) -> None:
    """Write a sampling mask as a MASK file."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MASK_MAGIC, FORMAT_VERSION, m.height, m.width))
        f.write(m.column_flags.tobytes())
        f.write(struct.pack("<dd", m.acceleration, m.center_fraction))


def read_mask(path) -> SamplingMask:
    """Read a MASK file back into a :class:`SamplingMask`."""
    with open(path, "rb") as f:
        h, w = _read_header(f, MASK_MAGIC, path)
        flags = np.frombuffer(_read_exact(f, w, "column flags"), dtype=np.uint8)
        acc, cf = struct.unpack("<dd", _read_exact(f, 16, "mask metadata"))
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    try:
        return SamplingMask(
            height=h, width=w, column_flags=flags.copy(), acceleration=acc, center_fraction=cf
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc

"""Phantom generation, FastMRI-format ingestion, and image export."""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .kspace import ifft2c

# Modified Shepp-Logan ellipses: (additive intensity, a, b, x0, y0, angle_deg)
# on the [-1, 1]^2 plane, summed where the membership inequality holds.
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def shepp_logan(h: int, w: int) -> np.ndarray:
    """Rasterize the ten-ellipse head phantom at h x w, intensities in [0, 1].

    Pixel (i, j) samples the plane at x = linspace(-1, 1, w)[j],
    y = linspace(1, -1, h)[i] (row 0 on top); a pixel belongs to an ellipse
    when the canonical quadratic form evaluates to <= 1.
    """
    if h < 8 or w < 8:
        raise ValueError("phantom dimensions must be >= 8")
    x = np.linspace(-1.0, 1.0, w)[None, :]
    y = np.linspace(1.0, -1.0, h)[:, None]
    img = np.zeros((h, w), dtype=np.float64)
    for value, a, b, x0, y0, angle_deg in SHEPP_LOGAN_ELLIPSES:
        phi = np.deg2rad(angle_deg)
        xr = (x - x0) * np.cos(phi) + (y - y0) * np.sin(phi)
        yr = -(x - x0) * np.sin(phi) + (y - y0) * np.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    # The additive intensities cancel to 0 in the ventricles up to float
    # rounding; clamp so the documented [0, 1] range holds exactly.
    return np.clip(img, 0.0, 1.0)


def read_fastmri_volume(path) -> tuple[np.ndarray, np.ndarray]:
    """Load a single-coil FastMRI HDF5 file.

    Returns (grids, references): per-slice *centered* k-space (the stored
    natural-order data is shifted on ingestion) and the corresponding
    magnitude images of the fully sampled reconstruction.
    """
    import h5py

    with h5py.File(path, "r") as f:
        if "kspace" not in f:
            raise FormatError(f"{path}: missing 'kspace' dataset")
        ds = f["kspace"]
        if ds.ndim != 3:
            raise FormatError(f"{path}: 'kspace' must be slices x H x W, got rank {ds.ndim}")
        raw = np.asarray(ds[()])
    if not np.iscomplexobj(raw):
        raise FormatError(f"{path}: 'kspace' dataset is not complex-valued")
    grids = np.fft.fftshift(raw.astype(np.complex128), axes=(-2, -1))
    references = np.abs(ifft2c(grids))
    return grids, references


def drop_initial_slices(volume, n: int = 5):
    """Remove the first n slices of a volume (default 5), preserving order."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if len(volume) <= n:
        raise ValueError(f"volume has {len(volume)} slices, need more than {n}")
    return volume[n:]


def normalize_magnitude(image: np.ndarray) -> np.ndarray:
    """Min-max normalize a magnitude image to [0, 1] (constant maps to 0)."""
    mag = np.abs(np.asarray(image)).astype(np.float64)
    lo = mag.min()
    span = mag.max() - lo
    if span == 0.0:
        return np.zeros_like(mag)
    return (mag - lo) / span


def save_png(path, image: np.ndarray) -> None:
    """Write an 8-bit grayscale PNG of the min-max-normalized magnitude."""
    from matplotlib import image as mpimage

    mpimage.imsave(path, normalize_magnitude(image), cmap="gray", vmin=0.0, vmax=1.0)

"""Diffusion-based reconstruction of undersampled MRI with k-space guidance.

The torch-backed network lives in :mod:`kgrecon.unet` and is imported on
demand so the numpy pipeline stays light.
"""

from .diffusion import (
    Denoiser,
    NoiseSchedule,
    build_schedule,
    default_schedule,
    forward_noise,
    predict_x0,
    reverse_step,
    reverse_transition,
)
from .errors import FormatError, NumericalError
from .guidance import (
    GuidanceConfig,
    consistency_residual,
    data_consistency,
    guided_step,
    noise_observation,
    renoise,
)
from .kspace import (
    SamplingMask,
    apply_mask,
    default_center_fraction,
    fft2c,
    ifft2c,
    make_mask,
    read_complex,
    read_mask,
    write_complex,
    write_mask,
    zero_fill,
)
from .metrics import psnr, ssim
from .modulation import (
    ModulationConfig,
    attenuate_low_frequencies,
    backbone_scale_map,
    scale_backbone,
)
from .oracle import GaussianDenoiser, GaussianPrior, gaussian_denoiser
from .sampling import (
    ReconstructionConfig,
    average_samples,
    build_coarse_schedule,
    coarse_to_fine_sample,
    split_rng,
)

__version__ = "0.1.0"

__all__ = [
    "Denoiser",
    "FormatError",
    "GaussianDenoiser",
    "GaussianPrior",
    "GuidanceConfig",
    "ModulationConfig",
    "NoiseSchedule",
    "NumericalError",
    "ReconstructionConfig",
    "SamplingMask",
    "apply_mask",
    "attenuate_low_frequencies",
    "average_samples",
    "backbone_scale_map",
    "build_coarse_schedule",
    "build_schedule",
    "coarse_to_fine_sample",
    "consistency_residual",
    "data_consistency",
    "default_center_fraction",
    "default_schedule",
    "fft2c",
    "forward_noise",
    "gaussian_denoiser",
    "guided_step",
    "ifft2c",
    "make_mask",
    "noise_observation",
    "predict_x0",
    "psnr",
    "read_complex",
    "read_mask",
    "renoise",
    "reverse_step",
    "reverse_transition",
    "scale_backbone",
    "split_rng",
    "ssim",
    "write_complex",
    "write_mask",
    "zero_fill",
]

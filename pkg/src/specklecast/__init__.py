"""specklecast: optical projection side-channel simulation and inversion.

A desk-scale toolkit that simulates the screen -> diffuse wall ->
camera channel and inverts it with physics-regularized iterative
schemes, plus the feature-space dissipation blocks, the semantic
re-projection loss, procedural scene generators, quality metrics and a
reproducible experiment harness.
"""

from .estimators import ProjectionChannel, RadianceInverter
from .grids import (
    bilinear_upsample,
    child_rng,
    convolve2,
    dft2,
    grad_magnitude,
    idft2,
    make_rng,
    mixed_second_derivative,
)
from .invert import InversionResult, IterateState, SchemeConfig, run_inversion
from .metrics import psnr, rmse, ssim
from .optics import OpticsConfig, apply_inverse_approx, apply_transfer, geometric_warp
from .scenegen import SceneSpec, generate, make_split

__version__ = "0.1.0"

__all__ = [
    "ProjectionChannel",
    "RadianceInverter",
    "OpticsConfig",
    "SchemeConfig",
    "IterateState",
    "InversionResult",
    "SceneSpec",
    "apply_transfer",
    "apply_inverse_approx",
    "geometric_warp",
    "run_inversion",
    "generate",
    "make_split",
    "dft2",
    "idft2",
    "convolve2",
    "mixed_second_derivative",
    "bilinear_upsample",
    "grad_magnitude",
    "make_rng",
    "child_rng",
    "psnr",
    "rmse",
    "ssim",
    "__version__",
]

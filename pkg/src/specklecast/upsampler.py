"""Multi-scale upsampling and pixel-domain output synthesis.

Each level doubles the spatial resolution of the deeper feature stack
with the tent (bilinear) kernel, adds the finer-scale stack from the
previous decoder level, and refines the sum with a per-level learned
kernel and activation.  Structure that exists at both scales is
reinforced; detail present only at the fine scale passes through a
single blurred branch and is relatively attenuated.  The first-level
output maps to the pixel domain through a linear output convolution
(no activation, so the full radiance range is representable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dissipation import ACTIVATIONS, activation_fn
from .grids import as_stack, bilinear_upsample, convolve2, make_rng
from .io import load_named_tensors, save_named_tensors

__all__ = [
    "UpsampleParams",
    "make_upsample_params",
    "save_upsample_params",
    "load_upsample_params",
    "upsample_level",
    "output_projection",
]


@dataclass(frozen=True)
class UpsampleParams:
    """Per-level refinement kernels plus the output projection weights."""

    levels: int
    channels: int
    kernel_size: int
    activation: str
    seed: int
    kappa_up: np.ndarray   # (levels, k, k), one kernel per level
    kappa_out: np.ndarray  # (C, k, k), summed over channels
    b_out: float

    def validate(self) -> "UpsampleParams":
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernels must be odd-sized, got {self.kernel_size}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.kappa_up.shape != (self.levels, self.kernel_size, self.kernel_size):
            raise ValueError("kappa_up shape mismatch")
        if self.kappa_out.shape != (self.channels, self.kernel_size, self.kernel_size):
            raise ValueError("kappa_out shape mismatch")
        return self


def make_upsample_params(
    levels: int = 2,
    channels: int = 2,
    kernel_size: int = 3,
    activation: str = "softplus",
    seed: int = 0,
) -> UpsampleParams:
    rng = make_rng(seed)
    k = kernel_size
    fan = k * k
    return UpsampleParams(
        levels=int(levels),
        channels=int(channels),
        kernel_size=int(k),
        activation=activation,
        seed=int(seed),
        kappa_up=rng.uniform(-1, 1, size=(levels, k, k)) / np.sqrt(fan),
        kappa_out=rng.uniform(-1, 1, size=(channels, k, k)) / np.sqrt(fan * channels),
        b_out=float(rng.uniform(-1, 1) / np.sqrt(fan * channels)),
    ).validate()


def save_upsample_params(path, params: UpsampleParams) -> None:
    meta = np.array(
        [params.levels, params.channels, params.kernel_size,
         float(ACTIVATIONS.index(params.activation)), params.seed, params.b_out],
        dtype=np.float64,
    )
    save_named_tensors(path, {"__meta__": meta, "kappa_up": params.kappa_up,
                              "kappa_out": params.kappa_out})


def load_upsample_params(path) -> UpsampleParams:
    tensors = load_named_tensors(path)
    meta = tensors["__meta__"]
    return UpsampleParams(
        levels=int(meta[0]),
        channels=int(meta[1]),
        kernel_size=int(meta[2]),
        activation=ACTIVATIONS[int(meta[3])],
        seed=int(meta[4]),
        b_out=float(meta[5]),
        kappa_up=tensors["kappa_up"],
        kappa_out=tensors["kappa_out"],
    ).validate()


def upsample_level(z_deep, z_prev, params: UpsampleParams, level: int) -> np.ndarray:
    """Double the deep stack, add the finer stack, refine per channel.

    ``z_prev`` must have exactly twice the spatial dimensions of
    ``z_deep``; ``level`` indexes which refinement kernel applies
    (level 1 feeds the output projection).
    """
    zd = as_stack(z_deep, name="deep stack")
    zp = as_stack(z_prev, name="previous-level stack")
    params.validate()
    if not (1 <= level <= params.levels):
        raise ValueError(f"level must be in [1, {params.levels}], got {level}")
    if zp.shape[0] != zd.shape[0]:
        raise ValueError(f"channel mismatch: {zd.shape[0]} vs {zp.shape[0]}")
    if zp.shape[1] != 2 * zd.shape[1] or zp.shape[2] != 2 * zd.shape[2]:
        raise ValueError(
            f"previous level must be exactly 2x the deep dims, got {zp.shape[1:]} vs {zd.shape[1:]}"
        )
    phi = activation_fn(params.activation)
    kernel = params.kappa_up[level - 1]
    out = np.empty_like(zp)
    for c in range(zd.shape[0]):
        up = bilinear_upsample(zd[c], 2)
        out[c] = phi(convolve2(up + zp[c], kernel))
    return out


def output_projection(f_up, params: UpsampleParams) -> np.ndarray:
    """Linear pixel-domain synthesis: ``sum_c kappa_out_c (conv) F_c + b_out``."""
    f = as_stack(f_up, name="first-level stack")
    params.validate()
    if f.shape[0] != params.channels:
        raise ValueError(f"stack has {f.shape[0]} channels, kappa_out expects {params.channels}")
    h, w = f.shape[1:]
    out = np.full((h, w), params.b_out, dtype=np.float64)
    for c in range(params.channels):
        out += convolve2(f[c], params.kappa_out[c])
    return out

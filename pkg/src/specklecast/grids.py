"""Core 2D grid numerics.

Everything in this package runs on plain float64 numpy arrays:

* a *field* is a 2-D ``(H, W)`` array of finite doubles,
* a *stack* is a 3-D ``(C, H, W)`` array of fields with shared dimensions,
* a *spectrum* is a 2-D complex128 array of the same shape as its field.

Conventions fixed here (and relied on everywhere else):

* FFT normalization: unnormalized forward, ``1/(H*W)`` inverse, so
  Parseval reads ``sum(|f|^2) == sum(|F|^2) / (H*W)``.
* Spatial convolutions use reflective padding with the edge sample
  repeated (half-sample symmetric, ``numpy.pad(mode="symmetric")``).
  This choice conserves total intensity under symmetric kernels.
* Finite differences are central in the interior and one-sided on the
  boundary (the ``numpy.gradient`` stencil).
* Interpolation is corners-aligned: output corners map exactly onto
  input corners.
* Random numbers come from PCG64; substreams are derived by composing
  integer keys into a ``SeedSequence``, which is reproducible
  bit-for-bit across platforms.

All functions are pure; none mutate their inputs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_field",
    "as_stack",
    "make_rng",
    "child_rng",
    "dft2",
    "idft2",
    "convolve2",
    "mixed_second_derivative",
    "bilinear_upsample",
    "grad_magnitude",
]


def as_field(a, name: str = "field") -> np.ndarray:
    """Validate and return ``a`` as a 2-D float64 array of finite values."""
    f = np.asarray(a, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={f.ndim}")
    if f.shape[0] < 1 or f.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def as_stack(a, name: str = "stack") -> np.ndarray:
    """Validate and return ``a`` as a 3-D ``(C, H, W)`` float64 array."""
    s = np.asarray(a, dtype=np.float64)
    if s.ndim != 3:
        raise ValueError(f"{name} must be 3-D (channels, height, width), got ndim={s.ndim}")
    if min(s.shape) < 1:
        raise ValueError(f"{name} must have positive dimensions, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError(f"{name} contains non-finite values")
    return s


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed; same seed, same stream, any platform."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent substream identified by ``(seed, *keys)``.

    Distinct key tuples give statistically independent streams; the
    mapping is deterministic, so experiment harnesses can re-derive any
    stream from the master seed and the condition/item indices.
    """
    entropy = (int(seed),) + tuple(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


# ----------------------------------------------------------------------
# Fourier transforms
# ----------------------------------------------------------------------

def dft2(field) -> np.ndarray:
    """Forward 2-D discrete Fourier transform (unnormalized).

    ``F[u, v] = sum_{x, y} f[y, x] exp(-2j*pi*(u*y/H + v*x/W))``

    A constant field therefore puts all its energy in the DC bin with
    value ``H*W*mean(f)``.
    """
    f = as_field(field)
    return np.fft.fft2(f)


def idft2(spec) -> np.ndarray:
    """Inverse 2-D DFT with the ``1/(H*W)`` factor; returns the real part.

    ``idft2(dft2(f))`` recovers ``f`` to machine precision.  For spectra
    that are not conjugate-symmetric the imaginary residue is silently
    discarded; callers that need to assert realness should check the
    spectrum themselves (see ``dissipation.frequency_split``).
    """
    s = np.asarray(spec, dtype=np.complex128)
    if s.ndim != 2:
        raise ValueError(f"spectrum must be 2-D, got ndim={s.ndim}")
    if s.shape[0] < 1 or s.shape[1] < 1:
        raise ValueError(f"spectrum must have positive dimensions, got {s.shape}")
    return np.fft.ifft2(s).real


# ----------------------------------------------------------------------
# Convolution
# ----------------------------------------------------------------------

def _kernel_spectrum(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Spectrum of ``kernel`` embedded on a ``shape`` grid, center at (0, 0)."""
    kh, kw = kernel.shape
    embedded = np.zeros(shape, dtype=np.float64)
    embedded[:kh, :kw] = kernel
    embedded = np.roll(embedded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(embedded)


def reflect_pad(field: np.ndarray, pad_y: int, pad_x: int) -> np.ndarray:
    """Half-sample symmetric padding (edge repeated): ``abc -> cba|abc|cba``."""
    if pad_y == 0 and pad_x == 0:
        return field
    return np.pad(field, ((pad_y, pad_y), (pad_x, pad_x)), mode="symmetric")


def convolve2(field, kernel) -> np.ndarray:
    """Same-size 2-D convolution with reflective boundary handling.

    Computes ``out[p] = sum_k kernel[k] * ext(field)[p - k]`` where
    ``ext`` is the half-sample symmetric extension.  The kernel must be
    odd-sized in both dimensions so it has a well-defined center.

    Internally the padded field is convolved circularly via the FFT,
    which is exact (to roundoff) because the pad width equals the
    kernel radius, so no wrap-around reaches the retained region.
    """
    f = as_field(field)
    k = as_field(kernel, name="kernel")
    kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel must be odd-sized in both dimensions, got {k.shape}")
    ry, rx = kh // 2, kw // 2
    if ry == 0 and rx == 0:
        return f * k[0, 0]
    padded = reflect_pad(f, ry, rx)
    spec = np.fft.fft2(padded) * _kernel_spectrum(k, padded.shape)
    out = np.fft.ifft2(spec).real
    h, w = f.shape
    return np.ascontiguousarray(out[ry:ry + h, rx:rx + w])


# ----------------------------------------------------------------------
# Finite differences
# ----------------------------------------------------------------------

def mixed_second_derivative(field) -> np.ndarray:
    """Mixed second derivative d2f/dxdy on the pixel grid.

    Central differences in the interior give the four-point stencil
    ``(f[y+1,x+1] - f[y+1,x-1] - f[y-1,x+1] + f[y-1,x-1]) / 4``;
    boundary rows and columns fall back to one-sided first differences
    (applied once per axis, i.e. the ``numpy.gradient`` composition).
    Annihilates any field of the form ``a + b*x + c*y`` exactly.
    """
    f = as_field(field)
    if f.shape[0] < 3 or f.shape[1] < 3:
        raise ValueError(f"field must be at least 3x3 for mixed derivatives, got {f.shape}")
    return np.gradient(np.gradient(f, axis=1), axis=0)


def grad_magnitude(field) -> np.ndarray:
    """Gradient magnitude ``sqrt(gx^2 + gy^2)`` from central differences.

    Boundary rows/columns use one-sided differences, matching
    ``numpy.gradient``.
    """
    f = as_field(field)
    if f.shape[0] < 2 or f.shape[1] < 2:
        raise ValueError(f"field must be at least 2x2 for gradients, got {f.shape}")
    gy, gx = np.gradient(f)
    return np.sqrt(gx * gx + gy * gy)


# ----------------------------------------------------------------------
# Interpolation
# ----------------------------------------------------------------------

def _axis_coords(n_in: int, n_out: int) -> np.ndarray:
    """Corners-aligned source coordinates for each output sample."""
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def bilinear_upsample(field, factor: int) -> np.ndarray:
    """Integer-factor bilinear (tent-kernel) upsampling, corners aligned.

    Output sample ``i`` reads source coordinate ``i*(n-1)/(f*n-1)``, so
    both corners of the output grid coincide with source corners and a
    two-sample ramp ``[0, 1]`` upsampled by 2 yields ``[0, 1/3, 2/3, 1]``.
    Each output value is the tent-product weighting of its (at most
    four) surrounding source samples, hence the global min/max envelope
    of the input is preserved.
    """
    f = as_field(field)
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"upsampling factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return f.copy()
    h, w = f.shape
    ys = _axis_coords(h, factor * h)
    xs = _axis_coords(w, factor * w)

    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = ys - y0
    wx = xs - x0

    top = f[y0][:, x0] * (1 - wx) + f[y0][:, x1] * wx
    bot = f[y1][:, x0] * (1 - wx) + f[y1][:, x1] * wx
    return top * (1 - wy)[:, None] + bot * wy[:, None]

"""The screen-to-wall optical channel and its regularized inverse.

The forward channel maps screen radiance (normalized to [0, 1], with
1.0 meaning ``screen_max_nits``) to the camera's observation of the
wall, in this order:

1. luminance attenuation: ``max(0, v*S - offset) / S``,
2. geometric warp by the homography implied by the camera pose,
3. diffuse blur: unit-sum Gaussian PSF, std scaled by distance ratio,
4. radiometric scale: ``albedo * (base_distance / distance)^2``,
5. camera response ``v -> v**(1/gamma)``,
6. additive Gaussian noise, clamped at zero.

The approximate inverse undoes the stages in reverse with a Wiener
filter in place of exact deblurring.  Stages 2-4 form the *linear*
channel used by the iterative solvers; `LinearChannel` exposes it with
a numerically exact adjoint (verified by dot tests) by implementing the
blur as gather / circular FFT / crop and the warp as a sparse bilinear
gather, both with explicit transposes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grids import as_field, _kernel_spectrum, reflect_pad

__all__ = [
    "OpticsConfig",
    "gaussian_psf_kernel",
    "pose_homography",
    "geometric_warp",
    "WarpOperator",
    "BlurOperator",
    "LinearChannel",
    "apply_transfer",
    "apply_inverse_approx",
    "wiener_deconvolve",
]

MAX_POSE_DEG = 45.0
POSE_FIELDS = ("pitch_deg", "yaw_deg", "roll_deg", "horiz_arc_deg", "vert_arc_deg")


@dataclass(frozen=True)
class OpticsConfig:
    """Full parameterization of the forward channel.

    ``pose`` is ``(pitch_deg, yaw_deg, roll_deg, horiz_arc_deg,
    vert_arc_deg)``: the first three rotate the camera in place, the
    arcs move it along horizontal/vertical orbits around the wall patch.
    """

    psf_sigma: float = 1.0
    albedo: float = 0.8
    base_distance_m: float = 2.0
    distance_m: float = 2.0
    brightness_offset_nits: float = 0.0
    gamma: float = 1.0
    noise_sigma: float = 0.0
    pose: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    screen_max_nits: float = 300.0
    noise_seed: int = 0

    def validate(self) -> "OpticsConfig":
        if not (self.psf_sigma >= 0.0):
            raise ValueError(f"optics config: psf_sigma must be >= 0, got {self.psf_sigma}")
        if not (0.0 < self.albedo <= 1.0):
            raise ValueError(f"optics config: albedo must be in (0, 1], got {self.albedo}")
        if not (self.base_distance_m > 0.0):
            raise ValueError(
                f"optics config: base_distance_m must be > 0, got {self.base_distance_m}"
            )
        if not (self.distance_m > 0.0):
            raise ValueError(f"optics config: distance_m must be > 0, got {self.distance_m}")
        if not (self.brightness_offset_nits >= 0.0):
            raise ValueError(
                "optics config: brightness_offset_nits must be >= 0, "
                f"got {self.brightness_offset_nits}"
            )
        if not (self.gamma > 0.0):
            raise ValueError(f"optics config: gamma must be > 0, got {self.gamma}")
        if not (self.noise_sigma >= 0.0):
            raise ValueError(f"optics config: noise_sigma must be >= 0, got {self.noise_sigma}")
        if not (self.screen_max_nits > 0.0):
            raise ValueError(
                f"optics config: screen_max_nits must be > 0, got {self.screen_max_nits}"
            )
        validate_pose(self.pose)
        return self

    @property
    def effective_sigma(self) -> float:
        """PSF std in pixels after distance scaling."""
        return self.psf_sigma * (self.distance_m / self.base_distance_m)

    @property
    def radiometric_scale(self) -> float:
        """Albedo times inverse-square distance falloff."""
        return self.albedo * (self.base_distance_m / self.distance_m) ** 2

    def without_noise(self) -> "OpticsConfig":
        return replace(self, noise_sigma=0.0)

    def to_mapping(self) -> dict:
        """Flatten to the string mapping used by the ``[optics]`` config section."""
        return {
            "psf_sigma": repr(self.psf_sigma),
            "albedo": repr(self.albedo),
            "base_distance_m": repr(self.base_distance_m),
            "distance_m": repr(self.distance_m),
            "brightness_offset_nits": repr(self.brightness_offset_nits),
            "gamma": repr(self.gamma),
            "noise_sigma": repr(self.noise_sigma),
            "pose": ",".join(repr(float(p)) for p in self.pose),
            "screen_max_nits": repr(self.screen_max_nits),
            "noise_seed": str(self.noise_seed),
        }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "OpticsConfig":
        kwargs: dict = {}
        for key, raw in mapping.items():
            if key == "pose":
                parts = [float(p) for p in str(raw).split(",")]
                if len(parts) != 5:
                    raise ValueError(f"optics config: pose needs 5 angles, got {len(parts)}")
                kwargs["pose"] = tuple(parts)
            elif key == "noise_seed":
                kwargs[key] = int(raw)
            elif key in cls.__dataclass_fields__:
                kwargs[key] = float(raw)
            else:
                raise ValueError(f"optics config: unknown key {key!r}")
        return cls(**kwargs).validate()


def validate_pose(pose) -> tuple:
    pose = tuple(float(p) for p in pose)
    if len(pose) != 5:
        raise ValueError(f"pose must have 5 angles {POSE_FIELDS}, got {len(pose)}")
    for name, angle in zip(POSE_FIELDS, pose):
        if abs(angle) > MAX_POSE_DEG:
            raise ValueError(f"pose: |{name}| must be <= {MAX_POSE_DEG} deg, got {angle}")
    return pose


def gaussian_psf_kernel(sigma: float) -> np.ndarray:
    """Sampled 2-D Gaussian, truncated at 3 sigma, normalized to unit sum.

    ``sigma == 0`` degenerates to the 1x1 identity kernel.
    """
    if sigma < 0:
        raise ValueError(f"psf sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return np.ones((1, 1), dtype=np.float64)
    radius = max(1, int(np.ceil(3.0 * sigma)))
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (coords / sigma) ** 2)
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


# ----------------------------------------------------------------------
# Geometry
# ----------------------------------------------------------------------

def _rot_x(a):  # pitch
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def _rot_y(a):  # yaw
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def _rot_z(a):  # roll
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def pose_homography(pose, shape: tuple[int, int]) -> np.ndarray:
    """3x3 homography for a camera pose over an ``(H, W)`` wall patch.

    Roll/pitch/yaw build the pure-rotation homography ``K R K^-1``
    (focal length ``2 * max(H, W)`` px, the narrow field of view of a
    camera trained on a wall patch from across a desk), so roll alone
    is an exact in-plane rotation and pitch/yaw produce displacement
    with perspective foreshortening.  Orbital arcs model a camera that
    keeps its original aim while sliding along the arc: the patch
    foreshortens by ``cos(arc)`` along the arc axis and its center
    shifts by ``f * tan(arc)`` pixels.
    """
    pitch, yaw, roll, harc, varc = (np.deg2rad(a) for a in validate_pose(pose))
    h, w = shape
    f = 2.0 * float(max(h, w))
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0

    k = np.array([[f, 0, cx], [0, f, cy], [0, 0, 1]], dtype=np.float64)
    k_inv = np.array(
        [[1 / f, 0, -cx / f], [0, 1 / f, -cy / f], [0, 0, 1]], dtype=np.float64
    )
    m_rot = k @ _rot_z(roll) @ _rot_x(pitch) @ _rot_y(yaw) @ k_inv

    scale = np.array(
        [
            [np.cos(harc), 0, cx * (1 - np.cos(harc))],
            [0, np.cos(varc), cy * (1 - np.cos(varc))],
            [0, 0, 1],
        ],
        dtype=np.float64,
    )
    shift = np.array(
        [[1, 0, f * np.tan(harc)], [0, 1, f * np.tan(varc)], [0, 0, 1]],
        dtype=np.float64,
    )
    return shift @ scale @ m_rot


class WarpOperator:
    """Resampling by a fixed homography, with its exact adjoint.

    Output pixel ``p`` reads the input at ``M^-1 p`` with bilinear
    weights; coordinates falling outside the input rectangle give 0.
    The adjoint scatters with the same weights, so
    ``<W u, v> == <u, W^T v>`` holds to roundoff.
    """

    def __init__(self, shape: tuple[int, int], matrix: np.ndarray):
        self.shape = (int(shape[0]), int(shape[1]))
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.shape != (3, 3):
            raise ValueError("homography matrix must be 3x3")
        self.is_identity = np.allclose(self.matrix, np.eye(3), atol=1e-14)
        if self.is_identity:
            return

        h, w = self.shape
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        ones = np.ones_like(xs)
        pts = np.stack([xs.ravel(), ys.ravel(), ones.ravel()])
        src = np.linalg.inv(self.matrix) @ pts
        sx = src[0] / src[2]
        sy = src[1] / src[2]

        self._valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        sx = np.where(self._valid, sx, 0.0)
        sy = np.where(self._valid, sy, 0.0)
        x0 = np.clip(np.floor(sx).astype(np.intp), 0, w - 1)
        y0 = np.clip(np.floor(sy).astype(np.intp), 0, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = sx - x0
        fy = sy - y0
        self._flat = [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1]
        self._wts = [
            self._valid * (1 - fx) * (1 - fy),
            self._valid * fx * (1 - fy),
            self._valid * (1 - fx) * fy,
            self._valid * fx * fy,
        ]

    def apply(self, field: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return field.copy()
        flat = field.ravel()
        out = np.zeros(field.size, dtype=np.float64)
        for idx, wts in zip(self._flat, self._wts):
            out += wts * flat[idx]
        return out.reshape(self.shape)

    def adjoint(self, field: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return field.copy()
        flat = field.ravel()
        out = np.zeros(field.size, dtype=np.float64)
        for idx, wts in zip(self._flat, self._wts):
            np.add.at(out, idx, wts * flat)
        return out.reshape(self.shape)

    def inverse(self) -> "WarpOperator":
        return WarpOperator(self.shape, np.linalg.inv(self.matrix))


def geometric_warp(field, pose) -> np.ndarray:
    """Warp a field by the homography of ``pose`` (identity pose is a no-op)."""
    f = as_field(field)
    return WarpOperator(f.shape, pose_homography(pose, f.shape)).apply(f)


# ----------------------------------------------------------------------
# Blur
# ----------------------------------------------------------------------

class BlurOperator:
    """Reflective-padding Gaussian blur with an exact adjoint.

    Forward: symmetric-pad by the kernel radius, circular FFT
    convolution, crop.  With pad width equal to the radius this equals
    direct convolution with half-sample symmetric indexing.  Adjoint:
    zero-embed, circular correlation, fold the padding back by
    scatter-add.
    """

    def __init__(self, shape: tuple[int, int], sigma: float):
        self.shape = (int(shape[0]), int(shape[1]))
        self.sigma = float(sigma)
        self.kernel = gaussian_psf_kernel(self.sigma)
        self.radius = self.kernel.shape[0] // 2
        self.is_identity = self.radius == 0
        if self.is_identity:
            return
        h, w = self.shape
        r = self.radius
        idx = np.arange(h * w).reshape(h, w)
        self._pad_idx = np.pad(idx, r, mode="symmetric")
        self._spectrum = _kernel_spectrum(self.kernel, self._pad_idx.shape)

    def apply(self, field: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return field.copy()
        h, w = self.shape
        r = self.radius
        padded = field.ravel()[self._pad_idx]
        out = np.fft.ifft2(np.fft.fft2(padded) * self._spectrum).real
        return np.ascontiguousarray(out[r:r + h, r:r + w])

    def adjoint(self, field: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return field.copy()
        h, w = self.shape
        r = self.radius
        embedded = np.zeros(self._pad_idx.shape, dtype=np.float64)
        embedded[r:r + h, r:r + w] = field
        corr = np.fft.ifft2(np.fft.fft2(embedded) * np.conj(self._spectrum)).real
        out = np.zeros(h * w, dtype=np.float64)
        np.add.at(out, self._pad_idx.ravel(), corr.ravel())
        return out.reshape(h, w)


def wiener_deconvolve(field, sigma: float, reg_eps: float, pad_margin: int = 8) -> np.ndarray:
    """Wiener-regularized deblur: ``H* / (|H|^2 + reg_eps)`` in frequency.

    The field is symmetric-padded by kernel radius + ``pad_margin``
    before the circular filter so that the filter's ringing, excited by
    the non-periodic boundary, stays inside the discarded band.
    """
    f = as_field(field)
    if not (reg_eps > 0.0):
        raise ValueError(f"reg_eps must be > 0, got {reg_eps}")
    kernel = gaussian_psf_kernel(sigma)
    r = kernel.shape[0] // 2
    if r == 0:
        return f.copy()
    pad = r + pad_margin
    padded = reflect_pad(f, pad, pad)
    spec = _kernel_spectrum(kernel, padded.shape)
    filt = np.conj(spec) / (np.abs(spec) ** 2 + reg_eps)
    out = np.fft.ifft2(np.fft.fft2(padded) * filt).real
    h, w = f.shape
    return np.ascontiguousarray(out[pad:pad + h, pad:pad + w])


# ----------------------------------------------------------------------
# Channel
# ----------------------------------------------------------------------

class LinearChannel:
    """The linear stages of the channel: warp, blur, radiometric scale.

    This is the operator the quadratic solvers and the adjoint test run
    against; the camera response is handled outside by pre-linearizing
    the observation.
    """

    def __init__(self, cfg: OpticsConfig, shape: tuple[int, int]):
        cfg.validate()
        self.cfg = cfg
        self.shape = (int(shape[0]), int(shape[1]))
        self.warp = WarpOperator(self.shape, pose_homography(cfg.pose, self.shape))
        self.blur = BlurOperator(self.shape, cfg.effective_sigma)
        self.scale = cfg.radiometric_scale

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.scale * self.blur.apply(self.warp.apply(x))

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return self.warp.adjoint(self.blur.adjoint(self.scale * r))


def _validate_screen(screen) -> np.ndarray:
    s = as_field(screen, name="screen")
    if s.min() < -1e-12 or s.max() > 1.0 + 1e-12:
        raise ValueError("screen radiance must lie in [0, 1]")
    return np.clip(s, 0.0, 1.0)


def apply_transfer(screen, cfg: OpticsConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Run the full forward channel on a screen radiance field.

    ``rng`` drives the additive noise stage and is required when
    ``cfg.noise_sigma > 0``; passing the generator explicitly keeps the
    operator pure and the caller in charge of reproducibility.
    """
    cfg.validate()
    s = _validate_screen(screen)
    offset = cfg.brightness_offset_nits / cfg.screen_max_nits
    attenuated = np.maximum(0.0, s - offset)

    chan = LinearChannel(cfg, s.shape)
    out = chan.apply(attenuated)
    out = np.maximum(out, 0.0) ** (1.0 / cfg.gamma)
    if cfg.noise_sigma > 0.0:
        if rng is None:
            raise ValueError("apply_transfer: rng is required when noise_sigma > 0")
        out = out + cfg.noise_sigma * rng.standard_normal(out.shape)
    return np.maximum(out, 0.0)


def apply_inverse_approx(
    obs,
    cfg: OpticsConfig,
    reg_eps: float = 1e-6,
    psi_psf_sigma: float | None = None,
) -> np.ndarray:
    """Approximate inverse of the channel (known-operator attack).

    Undoes the camera response and radiometric scale exactly, the blur
    by a Wiener filter, and the pose by the inverse homography.  Output
    is clamped to [0, 2].  ``psi_psf_sigma`` overrides the PSF width the
    attacker assumes, for mismatched-operator experiments.
    """
    cfg.validate()
    if not (reg_eps > 0.0):
        raise ValueError(f"reg_eps must be > 0, got {reg_eps}")
    y = as_field(obs, name="observation")
    if y.min() < 0.0:
        raise ValueError("observation must be nonnegative")

    v = y ** cfg.gamma
    v = v / cfg.radiometric_scale
    sigma = cfg.effective_sigma if psi_psf_sigma is None else float(psi_psf_sigma)
    v = wiener_deconvolve(v, sigma, reg_eps)
    warp = WarpOperator(v.shape, pose_homography(cfg.pose, v.shape))
    if not warp.is_identity:
        v = warp.inverse().apply(v)
    return np.clip(v, 0.0, 2.0)

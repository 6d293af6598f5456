"""Semantic re-projection: embeddings, similarity, loss, gradient.

Two encoders (a structural one and a collaborative/semantic one, told
apart only by their seeds) map a field to stage-5 embeddings: five
stride-2 stages of seeded random projections with softplus, shrinking
the spatial grid by 32x and emitting a d-vector per channel and
position.  The alignment between the two is scored by cosine
similarity with the stabilizer added inside each radicand,

    s = sum(p*r) / (sqrt(sum(p^2) + eps) * sqrt(sum(r^2) + eps)),

and the batch loss is ``mean((1 - s_j)^alpha) + lambda*||theta||^2``.
The loss's analytic gradient with respect to every structural-embedding
component is the product this module certifies (checked against
central finite differences); the encoders themselves stay fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import as_field, make_rng

__all__ = [
    "LossConfig",
    "SemanticEmbedding",
    "semantic_encode",
    "cosine_similarity_map",
    "similarity_at",
    "loss_from_similarities",
    "batch_loss",
    "batch_loss_gradient",
]

ENCODER_STAGES = 5
_STAGE_CHANNELS = (4, 8, 8, 8)  # intermediate widths; final stage emits channels*d


@dataclass(frozen=True)
class LossConfig:
    """Loss hyperparameters; ``theta`` is the flat vector the L2 term sees."""

    eps: float = 1e-8
    alpha: float = 1.0
    lam: float = 1e-4
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def validate(self) -> "LossConfig":
        if not (self.eps > 0.0):
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not (self.alpha >= 1.0):
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not (self.lam >= 0.0):
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        return self


@dataclass(frozen=True)
class SemanticEmbedding:
    """Stage-5 feature vectors: shape ``(channels, H/32, W/32, d)``."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"embedding must be 4-D (C, H, W, d), got ndim={v.ndim}")
        object.__setattr__(self, "vectors", v)

    @property
    def shape(self):
        return self.vectors.shape


def _strided_conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 stride-2 convolution with symmetric padding 1.

    ``x`` is (C_in, H, W) with even H, W; output is (C_out, H/2, W/2).
    """
    c_in, h, w = x.shape
    c_out = weight.shape[0]
    ho, wo = h // 2, w // 2
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="symmetric")
    out = np.zeros((c_out, ho, wo), dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            patch = padded[:, dy:dy + 2 * ho - 1:2, dx:dx + 2 * wo - 1:2]
            out += np.einsum("oi,ihw->ohw", weight[:, :, dy, dx], patch)
    return out + bias[:, None, None]


def semantic_encode(field2d, seed: int, d: int, channels: int = 2) -> SemanticEmbedding:
    """Fixed random-projection pyramid: 5 stride-2 stages with softplus.

    Deterministic per seed; the input dimensions must be divisible by
    32 so the stage-5 grid is exactly ``input/32``.
    """
    f = as_field(field2d)
    if d < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {d}")
    if channels < 1:
        raise ValueError(f"channel count must be >= 1, got {channels}")
    h, w = f.shape
    if h % 32 != 0 or w % 32 != 0:
        raise ValueError(f"input dims must be divisible by 32, got {f.shape}")

    rng = make_rng(seed)
    widths = (1,) + _STAGE_CHANNELS + (channels * d,)
    x = f[None, :, :]
    for stage in range(ENCODER_STAGES):
        c_in, c_out = widths[stage], widths[stage + 1]
        fan = c_in * 9
        weight = rng.uniform(-1, 1, size=(c_out, c_in, 3, 3)) / np.sqrt(fan)
        bias = rng.uniform(-1, 1, size=c_out) / np.sqrt(fan)
        x = np.logaddexp(0.0, _strided_conv(x, weight, bias))
    ho, wo = h // 32, w // 32
    vectors = x.reshape(channels, d, ho, wo).transpose(0, 2, 3, 1)
    return SemanticEmbedding(np.ascontiguousarray(vectors))


def _check_pair(p: SemanticEmbedding, r: SemanticEmbedding) -> None:
    if p.shape != r.shape:
        raise ValueError(f"embedding shapes differ: {p.shape} vs {r.shape}")


def cosine_similarity_map(p: SemanticEmbedding, r: SemanticEmbedding, eps: float = 1e-8) -> np.ndarray:
    """Per-channel, per-position cosine similarity, eps inside each sqrt.

    Values lie strictly inside [-1, 1] for finite vectors; a zero
    vector scores 0 rather than dividing by zero.
    """
    _check_pair(p, r)
    if not (eps > 0.0):
        raise ValueError(f"eps must be > 0, got {eps}")
    vp, vr = p.vectors, r.vectors
    dot = np.sum(vp * vr, axis=-1)
    dp = np.sqrt(np.sum(vp * vp, axis=-1) + eps)
    dr = np.sqrt(np.sum(vr * vr, axis=-1) + eps)
    return dot / (dp * dr)


def similarity_at(p, r, eps, positions, channel: int = 0) -> np.ndarray:
    """Similarities of the batch positions ``[(x, y), ...]`` in one channel."""
    smap = cosine_similarity_map(p, r, eps)
    if not positions:
        raise ValueError("batch must not be empty")
    xs = np.array([pos[0] for pos in positions], dtype=np.intp)
    ys = np.array([pos[1] for pos in positions], dtype=np.intp)
    return smap[channel, ys, xs]


def loss_from_similarities(similarities, cfg: LossConfig) -> float:
    """Scalar form of the batch loss: ``mean((1-s)^alpha) + lam*||theta||^2``."""
    cfg.validate()
    s = np.asarray(similarities, dtype=np.float64)
    if s.size == 0:
        raise ValueError("batch must not be empty")
    theta = np.asarray(cfg.theta, dtype=np.float64)
    return float(np.mean((1.0 - s) ** cfg.alpha) + cfg.lam * np.sum(theta * theta))


def batch_loss(p, r, cfg: LossConfig, positions, channel: int = 0) -> float:
    """Batch loss over embedding positions of one channel."""
    return loss_from_similarities(similarity_at(p, r, cfg.eps, positions, channel), cfg)


def batch_loss_gradient(p, r, cfg: LossConfig, positions, channel: int = 0):
    """Analytic gradient of the batch loss.

    Returns ``(grad_vp, grad_theta)`` where ``grad_vp`` matches the
    structural embedding's shape (nonzero only at batch positions) and
    ``grad_theta = 2 * lam * theta``.  Per batch item, with
    ``D_p = sqrt(sum(p^2) + eps)`` and ``D_r`` likewise,

        ds/dp_i = r_i / (D_p * D_r) - s * p_i / D_p^2
        dL/dp_i = -(alpha / N) * (1 - s)^(alpha - 1) * ds/dp_i

    Repeated positions accumulate.
    """
    _check_pair(p, r)
    cfg.validate()
    if not positions:
        raise ValueError("batch must not be empty")
    vp, vr = p.vectors, r.vectors
    n = len(positions)
    grad = np.zeros_like(vp)
    for x, y in positions:
        pv = vp[channel, y, x]
        rv = vr[channel, y, x]
        dp = np.sqrt(np.sum(pv * pv) + cfg.eps)
        dr = np.sqrt(np.sum(rv * rv) + cfg.eps)
        s = float(pv @ rv / (dp * dr))
        ds_dp = rv / (dp * dr) - s * pv / (dp * dp)
        grad[channel, y, x] += -(cfg.alpha / n) * (1.0 - s) ** (cfg.alpha - 1.0) * ds_dp
    theta = np.asarray(cfg.theta, dtype=np.float64)
    return grad, 2.0 * cfg.lam * theta

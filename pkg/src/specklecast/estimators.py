"""Scikit-learn estimator wrappers around the channel and the inverter.

Both the forward channel (screens to wall observations) and the
iterative inverter (observations back to radiance estimates) are
transform-shaped, so they compose with pipelines, grid search, and
``clone``:

    channel = ProjectionChannel(optics=cfg)
    inverter = RadianceInverter(optics=cfg, scheme="prirr").fit(Y)
    recon = inverter.transform(channel.transform(screens))

``X`` may be a single field ``(H, W)``, a batch ``(n, H, W)``, or a
flattened batch ``(n, H*W)`` when ``height``/``width`` are given (or
the images are square); outputs keep the input layout.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .grids import child_rng
from .invert import SchemeConfig, estimate_lipschitz, run_inversion
from .optics import OpticsConfig, apply_inverse_approx, apply_transfer

__all__ = ["ProjectionChannel", "RadianceInverter", "as_image_batch"]


def as_image_batch(X, height=None, width=None):
    """Coerce supported layouts to ``(n, H, W)`` float64.

    Returns ``(batch, restore)`` where ``restore`` maps a same-shaped
    batch back to the caller's layout.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        return arr, lambda out: out
    if arr.ndim == 2:
        if height is not None and width is not None:
            if arr.shape[1] == height * width:
                return (
                    arr.reshape(arr.shape[0], height, width),
                    lambda out: out.reshape(arr.shape[0], height * width),
                )
            if arr.shape == (height, width):
                return arr[None], lambda out: out[0]
            raise ValueError(
                f"2-D input of shape {arr.shape} matches neither one {height}x{width} "
                f"image nor a flattened batch"
            )
        return arr[None], lambda out: out[0]
    raise ValueError(f"expected a field, an image batch or a flattened batch, got ndim={arr.ndim}")


def _check_finite(batch):
    if not np.all(np.isfinite(batch)):
        raise ValueError("input contains non-finite values")


class ProjectionChannel(BaseEstimator, TransformerMixin):
    """The forward optical channel as a stateless transformer.

    ``transform`` pushes each screen through the channel (noise streams
    are derived from ``optics.noise_seed`` and the sample index);
    ``inverse_transform`` applies the regularized approximate inverse.

    Parameters
    ----------
    optics : OpticsConfig or None
        Channel parameterization; ``None`` means the dataclass defaults.
    reg_eps : float
        Wiener regularizer used by ``inverse_transform``.
    height, width : int or None
        Image dimensions, required only for flattened 2-D batches of
        non-square images.
    """

    def __init__(self, optics=None, reg_eps=1e-6, height=None, width=None):
        self.optics = optics
        self.reg_eps = reg_eps
        self.height = height
        self.width = width

    def _cfg(self) -> OpticsConfig:
        cfg = self.optics if self.optics is not None else OpticsConfig()
        return cfg.validate()

    def fit(self, X, y=None):
        batch, _ = as_image_batch(X, self.height, self.width)
        _check_finite(batch)
        self.n_features_in_ = batch[0].size
        self.image_shape_ = batch.shape[1:]
        return self

    def transform(self, X):
        cfg = self._cfg()
        batch, restore = as_image_batch(X, self.height, self.width)
        _check_finite(batch)
        out = np.empty_like(batch)
        for i, screen in enumerate(batch):
            rng = child_rng(cfg.noise_seed, i) if cfg.noise_sigma > 0 else None
            out[i] = apply_transfer(screen, cfg, rng)
        return restore(out)

    def inverse_transform(self, X):
        cfg = self._cfg()
        batch, restore = as_image_batch(X, self.height, self.width)
        _check_finite(batch)
        out = np.empty_like(batch)
        for i, obs in enumerate(batch):
            out[i] = apply_inverse_approx(obs, cfg, self.reg_eps)
        return restore(out)


class RadianceInverter(BaseEstimator, TransformerMixin):
    """Iterative inversion of wall observations as a transformer.

    ``fit`` sizes the gradient step from a power-method estimate of the
    channel's squared top singular value when ``eta`` is ``None`` (the
    estimate is stored as ``eta_``); ``transform`` then inverts each
    observation with the configured scheme.

    Parameters mirror `SchemeConfig` plus the channel description.
    """

    def __init__(
        self,
        optics=None,
        scheme="prirr",
        eta=None,
        beta=0.9,
        rho=1.0,
        reg_lambda=0.0,
        gate_gamma=5.0,
        max_iters=200,
        tol=1e-3,
        reg_eps=1e-6,
        height=None,
        width=None,
    ):
        self.optics = optics
        self.scheme = scheme
        self.eta = eta
        self.beta = beta
        self.rho = rho
        self.reg_lambda = reg_lambda
        self.gate_gamma = gate_gamma
        self.max_iters = max_iters
        self.tol = tol
        self.reg_eps = reg_eps
        self.height = height
        self.width = width

    def _cfg(self) -> OpticsConfig:
        cfg = self.optics if self.optics is not None else OpticsConfig()
        return cfg.validate()

    def _scheme_config(self, eta) -> SchemeConfig:
        return SchemeConfig(
            scheme=self.scheme,
            eta=eta,
            beta=self.beta,
            rho=self.rho,
            reg_lambda=self.reg_lambda,
            gate_gamma=self.gate_gamma,
            max_iters=self.max_iters,
            tol=self.tol,
            reg_eps=self.reg_eps,
        ).validate()

    def fit(self, X, y=None):
        batch, _ = as_image_batch(X, self.height, self.width)
        _check_finite(batch)
        self._scheme_config(self.eta)  # validate hyperparameters up front
        self.n_features_in_ = batch[0].size
        self.image_shape_ = batch.shape[1:]
        if self.eta is not None:
            self.eta_ = float(self.eta)
        elif self.scheme == "prirr":
            self.eta_ = 1.0
        else:
            lip = estimate_lipschitz(self._cfg(), self.image_shape_) + self.reg_lambda
            self.eta_ = 0.9 / lip
        return self

    def transform(self, X):
        check_is_fitted(self, "eta_")
        cfg = self._cfg()
        scheme = self._scheme_config(self.eta_)
        batch, restore = as_image_batch(X, self.height, self.width)
        _check_finite(batch)
        if batch.shape[1:] != self.image_shape_:
            raise ValueError(
                f"image shape {batch.shape[1:]} differs from fitted {self.image_shape_}"
            )
        out = np.empty_like(batch)
        for i, obs in enumerate(batch):
            out[i] = run_inversion(np.maximum(obs, 0.0), cfg, scheme).final_estimate
        return restore(out)

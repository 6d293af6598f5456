"""Scikit-learn API conformance of the channel and inverter."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from specklecast.estimators import ProjectionChannel, RadianceInverter, as_image_batch
from specklecast.optics import OpticsConfig
from specklecast.scenegen import SceneSpec, generate

CFG = OpticsConfig(psf_sigma=0.6, albedo=0.8, gamma=1.0)


def screens(n=3, size=32):
    return np.stack([
        generate(SceneSpec(category="chart", size=(size, size), seed=i)).image
        for i in range(n)
    ])


class TestBatchCoercion:
    def test_three_d_passthrough(self):
        x = np.zeros((2, 4, 5))
        batch, restore = as_image_batch(x)
        assert batch.shape == (2, 4, 5)
        assert restore(batch).shape == (2, 4, 5)

    def test_flattened_batch_with_declared_dims(self):
        x = np.arange(2 * 12, dtype=float).reshape(2, 12)
        batch, restore = as_image_batch(x, height=3, width=4)
        assert batch.shape == (2, 3, 4)
        assert np.array_equal(restore(batch), x)

    def test_bare_field(self):
        x = np.zeros((6, 7))
        batch, restore = as_image_batch(x)
        assert batch.shape == (1, 6, 7)
        assert restore(batch).shape == (6, 7)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="matches neither"):
            as_image_batch(np.zeros((2, 13)), height=3, width=4)


class TestProjectionChannel:
    def test_round_trip_with_inverse_transform(self):
        x = screens()
        chan = ProjectionChannel(optics=CFG)
        obs = chan.fit_transform(x)
        rec = chan.inverse_transform(obs)
        assert np.max(np.abs(np.clip(rec, 0, 1) - x)) < 0.05

    def test_noise_is_seed_deterministic(self):
        x = screens(2)
        noisy = OpticsConfig(psf_sigma=0.6, gamma=1.0, noise_sigma=0.01, noise_seed=5)
        a = ProjectionChannel(optics=noisy).transform(x)
        b = ProjectionChannel(optics=noisy).transform(x)
        assert np.array_equal(a, b)
        c = ProjectionChannel(optics=OpticsConfig(psf_sigma=0.6, gamma=1.0,
                                                  noise_sigma=0.01, noise_seed=6)).transform(x)
        assert not np.array_equal(a, c)

    def test_get_set_params(self):
        chan = ProjectionChannel(optics=CFG, reg_eps=1e-5)
        params = chan.get_params()
        assert params["reg_eps"] == 1e-5
        chan.set_params(reg_eps=1e-4)
        assert chan.reg_eps == 1e-4


class TestRadianceInverter:
    def test_requires_fit_before_transform(self):
        with pytest.raises(NotFittedError):
            RadianceInverter(optics=CFG).transform(np.zeros((1, 32, 32)))

    def test_fit_estimates_step_size(self):
        x = screens(1)
        inv = RadianceInverter(optics=CFG, scheme="nag").fit(x)
        assert 0.5 < inv.eta_ < 2.0
        explicit = RadianceInverter(optics=CFG, scheme="nag", eta=0.7).fit(x)
        assert explicit.eta_ == 0.7

    def test_transform_shape_guard(self):
        inv = RadianceInverter(optics=CFG).fit(np.zeros((1, 32, 32)))
        with pytest.raises(ValueError, match="shape"):
            inv.transform(np.zeros((1, 16, 16)))

    def test_clone_preserves_params(self):
        inv = RadianceInverter(optics=CFG, scheme="admm", rho=2.5, max_iters=17)
        twin = clone(inv)
        assert twin.get_params()["rho"] == 2.5
        assert twin.get_params()["max_iters"] == 17

    def test_pipeline_recovers_screens(self):
        x = screens(2)
        pipe = Pipeline([
            ("channel", ProjectionChannel(optics=CFG)),
            ("inverter", RadianceInverter(optics=CFG, scheme="nag",
                                          max_iters=300, tol=1e-7)),
        ])
        rec = np.clip(pipe.fit_transform(x), 0, 1)
        assert np.max(np.abs(rec - x)) < 1e-2

    def test_flattened_layout_preserved(self):
        x = screens(2, size=32).reshape(2, -1)
        inv = RadianceInverter(optics=CFG, scheme="prirr", max_iters=30,
                               height=32, width=32).fit(x)
        out = inv.transform(x)
        assert out.shape == x.shape

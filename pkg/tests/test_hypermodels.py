import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from hypx import base_models as bm
from hypx import hypermodels as hms
from hypx import numerics as nx
from hypx.numerics import ConfigurationError, InvalidDimensionError, RngStream


class TestReferenceDistributions:
    def test_onehot_rows(self):
        Z = hms.OneHotUniform(5).sample(RngStream(0), 200)
        npt.assert_array_equal(Z.sum(axis=1), 1.0)
        assert set(np.unique(Z)) == {0.0, 1.0}

    def test_hypersphere_rows(self):
        Z = hms.HypersphereUniform(4).sample(RngStream(1), 50)
        npt.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-12)

    def test_single_draw_shape(self):
        assert hms.GaussianUnit(3).sample(RngStream(2)).shape == (3,)
        assert hms.sample_index(hms.GaussianUnit(3), RngStream(2)).shape == (3,)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            hms.ReferenceDistribution("laplace", 3)


class TestMaps:
    def test_ensemble_selects_particle(self):
        P = np.arange(6.0).reshape(2, 3)
        hm = hms.EnsembleHypermodel(P)
        npt.assert_array_equal(hm.map(np.array([0.0, 1.0, 0.0])), [1.0, 4.0])

    def test_linear_is_affine(self):
        hm = hms.LinearHypermodel(np.array([1.0, -1.0]), np.array([[1.0, 2.0], [0.0, 3.0]]))
        npt.assert_allclose(hm.map(np.array([1.0, 1.0])), [4.0, 2.0])

    def test_map_returns_base_params_with_arch(self):
        hm = hms.LinearHypermodel(np.zeros(2), np.eye(2))
        theta = hm.map(np.array([0.5, 0.5]), arch=bm.LinearArchitecture(2))
        assert isinstance(theta, bm.BaseParams)

    def test_mask_zeroes_off_block_entries(self):
        mask = hms.block_mask([(1, 2), (1, 2)])
        npt.assert_array_equal(mask, [[1, 1, 0, 0], [0, 0, 1, 1]])
        hm = hms.LinearHypermodel(np.zeros(2), np.ones((2, 4)), mask=mask)
        npt.assert_array_equal(hm.mixer, mask.astype(float))

    def test_hypernetwork_matches_manual(self):
        rng = RngStream(3)
        arch = bm.MlpArchitecture(3, (4,), 5)
        flat = rng.normal(size=arch.param_count)
        hm = hms.HypernetworkHypermodel(arch, flat)
        z = rng.normal(size=3)
        (W1, b1), (W2, b2) = arch.unpack(flat)
        npt.assert_allclose(hm.map(z), np.maximum(z @ W1 + b1, 0) @ W2 + b2, rtol=1e-12)

    def test_sparse_softmax_known_value(self):
        hm = hms.SparseSoftmaxHypermodel(np.ones(3), offset=0.01, temperature=10.0)
        z = np.array([1.0, 0.0, 0.0])
        logits = 10.0 * (z**2 + 0.01)
        npt.assert_allclose(hm.map(z), np.exp(logits) / np.exp(logits).sum(), rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_sparse_softmax_on_simplex(self, seed):
        rng = RngStream(seed)
        hm = hms.SparseSoftmaxHypermodel(rng.uniform(0.0, 5.0, size=8))
        G = hm.map_batch(hm.reference.sample(rng, 20))
        assert np.all(G >= 0)
        npt.assert_allclose(G.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["ensemble", "linear", "hypernetwork", "sparse"])
    def test_graph_matches_map_batch(self, kind):
        rng = RngStream(4)
        if kind == "ensemble":
            hm = hms.EnsembleHypermodel(rng.normal(size=(3, 4)))
        elif kind == "linear":
            hm = hms.LinearHypermodel(rng.normal(size=3), rng.normal(size=(3, 2)))
        elif kind == "hypernetwork":
            hm = hms.HypernetworkHypermodel(bm.MlpArchitecture(2, (3,), 3), rng.normal(size=21))
        else:
            hm = hms.SparseSoftmaxHypermodel(rng.uniform(size=3))
        Z = hm.reference.sample(rng, 5)
        nodes = {k: nx.constant(v) for k, v in hm.params.items()}
        npt.assert_allclose(hm.graph(nodes, Z).value, hm.map_batch(Z), rtol=1e-12)

    def test_wrong_index_dimension(self):
        hm = hms.LinearHypermodel(np.zeros(2), np.eye(2))
        with pytest.raises(InvalidDimensionError):
            hm.map(np.ones(3))


class TestInit:
    def test_params_per_index_diagonal(self):
        hm = hms.init_hypermodel("linear_diagonal", {"n_arms": 10, "block_width": 3}, "normal", RngStream(0))
        assert hm.params_per_index() == 10 * (3 + 1)
        assert hm.index_dim == 30

    def test_glorot_linear(self):
        hm = hms.init_hypermodel("linear", {"n_theta": 331, "index_dim": 30}, "glorot", RngStream(1))
        npt.assert_array_equal(hm.offset, 0.0)
        assert np.abs(hm.mixer).max() <= np.sqrt(6.0 / (30 + 331))

    def test_truncated_ensemble(self):
        hm = hms.init_hypermodel("ensemble", {"n_theta": 331, "n_particles": 30}, "truncated_normal", RngStream(2))
        assert hm.particles.shape == (331, 30)
        assert np.abs(hm.particles).max() <= 0.1

    def test_sparse_requires_ones(self):
        hm = hms.init_hypermodel("sparse_softmax", {"n_theta": 6}, "ones", RngStream(3))
        npt.assert_array_equal(hm.params["nu"], 1.0)
        with pytest.raises(ConfigurationError):
            hms.init_hypermodel("sparse_softmax", {"n_theta": 6}, "normal", RngStream(3))

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            hms.init_hypermodel("mixture", {}, "normal", RngStream(0))

    def test_block_diagonal_prior_mixer(self):
        B = hms.make_block_diagonal_mixer([(4, 2), (3, 5)], RngStream(5))
        npt.assert_allclose(np.linalg.norm(B[:4, :2], axis=1), 1.0)
        npt.assert_allclose(np.linalg.norm(B[4:, 2:], axis=1), 1.0)
        npt.assert_array_equal(B[:4, 2:], 0.0)
        npt.assert_array_equal(B[4:, :2], 0.0)


class TestCheckpoint:
    def test_roundtrip_is_bit_exact(self):
        rng = RngStream(6)
        hm = hms.init_hypermodel("hypernetwork", {"n_theta": 5, "index_dim": 3, "hidden": (4,)}, "normal", rng)
        blob = hms.save_params(hm)
        saved = hm.copy_params()
        hm.params["net"] += 1.0
        hms.load_params(hm, blob)
        npt.assert_array_equal(hm.params["net"], saved["net"])

    def test_shape_mismatch(self):
        a = hms.LinearHypermodel(np.zeros(2), np.eye(2))
        b = hms.LinearHypermodel(np.zeros(3), np.eye(3))
        with pytest.raises(InvalidDimensionError):
            hms.load_params(b, hms.save_params(a))


class TestSparseTemperature:
    def test_zero_temperature_is_uniform(self):
        hm = hms.SparseSoftmaxHypermodel(np.array([1.0, 3.0, 0.5, 2.0]), temperature=0.0)
        npt.assert_allclose(hm.map(np.array([2.0, -1.0, 0.3, 0.0])), 0.25)

import numpy as np
import numpy.testing as npt
import pytest

from hypx import base_models as bm
from hypx import numerics as nx
from hypx.numerics import InvalidDimensionError, RngStream


def manual_mlp(layers, x):
    h = x
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h[..., 0]


class TestArchitecture:
    def test_generator_param_count(self):
        # 20*3 + 3 + 3*3 + 3 + 3*1 + 1
        assert bm.MlpArchitecture(20, (3, 3)).param_count == 79

    def test_differential_param_count(self):
        # 20*10 + 10 + 10*10 + 10 + 10 + 1
        assert bm.MlpArchitecture(20, (10, 10)).param_count == 331

    def test_pack_unpack_roundtrip(self):
        arch = bm.MlpArchitecture(4, (3, 2))
        flat = RngStream(0).normal(size=arch.param_count)
        npt.assert_array_equal(arch.pack(arch.unpack(flat)), flat)

    def test_layout_is_weights_then_bias(self):
        arch = bm.MlpArchitecture(2, (3,))
        flat = np.arange(arch.param_count, dtype=float)
        (W1, b1), (W2, b2) = arch.unpack(flat)
        npt.assert_array_equal(W1, [[0, 1, 2], [3, 4, 5]])
        npt.assert_array_equal(b1, [6, 7, 8])
        npt.assert_array_equal(W2[:, 0], [9, 10, 11])
        npt.assert_array_equal(b2, [12])


class TestForward:
    def test_matches_manual_loop(self):
        rng = RngStream(1)
        arch = bm.MlpArchitecture(5, (4, 3))
        flat = rng.normal(size=(2, arch.param_count))
        X = rng.normal(size=(6, 5))
        out = bm.mlp_forward(arch, flat, X)
        assert out.shape == (2, 6)
        for k in range(2):
            npt.assert_allclose(out[k], manual_mlp(arch.unpack(flat[k]), X), rtol=1e-12)

    def test_relu_positive_homogeneity(self):
        rng = RngStream(2)
        arch = bm.MlpArchitecture(3, (4,))
        (W1, b1), _ = arch.unpack(rng.normal(size=arch.param_count))
        x = rng.normal(size=3)
        c = 2.5
        npt.assert_allclose(np.maximum(x @ (c * W1) + c * b1, 0), c * np.maximum(x @ W1 + b1, 0))

    def test_eval_linear(self):
        assert bm.eval_linear(np.array([1.0, 2.0]), np.array([3.0, -1.0])) == 1.0
        with pytest.raises(InvalidDimensionError):
            bm.eval_linear(np.ones(2), np.ones(3))

    def test_eval_mlp_checks_input(self):
        arch = bm.MlpArchitecture(3, (2,))
        theta = bm.BaseParams(np.zeros(arch.param_count), arch)
        assert bm.eval_mlp(theta, np.ones(3)) == 0.0
        with pytest.raises(InvalidDimensionError):
            bm.eval_mlp(theta, np.ones(4))

    def test_base_params_length_checked(self):
        with pytest.raises(InvalidDimensionError):
            bm.BaseParams(np.zeros(3), bm.LinearArchitecture(4))

    @pytest.mark.parametrize("arch", [bm.LinearArchitecture(3), bm.MlpArchitecture(3, (4, 2))])
    def test_graph_twin_matches_evaluate(self, arch):
        rng = RngStream(3)
        base = bm.make_base(arch)
        thetas = rng.normal(size=(4, arch.param_count))
        X = rng.normal(size=(5, 3))
        npt.assert_allclose(base.graph(nx.constant(thetas), X).value, base.evaluate(thetas, X), rtol=1e-12)


class TestAdditivePrior:
    def setup_method(self):
        self.arch = bm.LinearArchitecture(3)
        self.spec = bm.AdditivePriorSpec(np.array([1.0, 2.0, 3.0]), np.eye(3)[:, :2], self.arch)

    def test_prior_params_are_d_b_z(self):
        npt.assert_allclose(self.spec.prior_params(np.array([[1.0, -1.0]])), [[1.0, -2.0, 0.0]])

    def test_arrays_read_only(self):
        with pytest.raises(ValueError):
            self.spec.prior_mixer[0, 0] = 5.0
        with pytest.raises(ValueError):
            self.spec.prior_scale[0] = 5.0

    def test_eval_additive_sums_both_networks(self):
        theta_hat = bm.BaseParams(np.array([0.5, 0.0, 1.0]), self.arch)
        x = np.array([1.0, 1.0, 1.0])
        # prior params (1*1, 2*1, 0) . x = 3, differential 1.5
        assert bm.eval_additive(self.spec, np.array([1.0, 1.0]), theta_hat, x) == pytest.approx(4.5)

    def test_rejects_bad_shapes(self):
        with pytest.raises(InvalidDimensionError):
            bm.AdditivePriorSpec(np.ones(2), np.eye(3), self.arch)
        with pytest.raises(ValueError):
            bm.AdditivePriorSpec(np.array([1.0, 0.0, 1.0]), np.eye(3), self.arch)

    def test_gaussian_prior_scale_per_layer(self):
        arch = bm.MlpArchitecture(20, (3, 3))
        scale = bm.gaussian_prior_scale(arch, (2.25, 0.75, 0.75), bias_var=1.0, multiplier=2.0)
        slices = arch.layer_slices()
        (_, _, w0, b0) = arch.layout[0]
        npt.assert_allclose(scale[w0:b0], np.sqrt(4.5))
        npt.assert_allclose(scale[b0:b0 + 3], 1.0)
        (_, _, w2, b2) = arch.layout[2]
        npt.assert_allclose(scale[w2:b2], np.sqrt(1.5))
        assert sum(s.stop - s.start for s in slices) == 79

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridtangent import (ConfigError, Dataset, GridGeometry, GridModel, MulFA, MulFAParams, Multilinear,
                         dense_gradient, grad_wrt_features, model_forward)

from conftest import make_model


class TestForward:
    def test_linear_cell(self):
        m = GridModel(GridGeometry.regular([2]), Multilinear(), [[0.0], [1.0]])
        assert model_forward(m, [0.25]) == pytest.approx([0.25])

    @pytest.mark.parametrize("variant", ["multilinear", "gaussian", "mulfa"])
    def test_constant_features(self, variant, rng):
        m = make_model(variant, (6, 5))
        m.features[:] = 0.37
        assert np.allclose(m(rng.uniform(size=(100, 2))), 0.37, atol=1e-12)

    def test_at_node(self):
        m = GridModel(GridGeometry.regular([3]), Multilinear(), [[0.1], [0.3], [0.9]])
        assert model_forward(m, [0.5]) == pytest.approx([0.3])

    def test_single_vs_batch(self, rng):
        m = make_model("mulfa", (4, 4), features="random")
        x = rng.uniform(size=(3, 2))
        batch = m(x)
        for i in range(3):
            assert np.allclose(model_forward(m, x[i]), batch[i], rtol=1e-14, atol=1e-14)

    @pytest.mark.parametrize("variant", ["multilinear", "gaussian", "mulfa"])
    def test_linear_in_features(self, variant, rng):
        m = make_model(variant, (5, 5), out_dim=3)
        w1, w2 = rng.normal(size=(2,) + m.features.shape)
        x = rng.uniform(size=(50, 2))
        a, b = 0.7, -1.3
        lhs = m.with_features(a * w1 + b * w2)(x)
        rhs = a * m.with_features(w1)(x) + b * m.with_features(w2)(x)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


class TestGradient:
    def test_cell_weights(self):
        m = make_model("multilinear", (2,))
        idx, w = grad_wrt_features(m, [0.25])
        assert dict(zip(idx.tolist(), w.tolist())) == {0: 0.75, 1: 0.25}

    def test_at_node_is_one_hot(self):
        m = make_model("multilinear", (2,))
        g = dense_gradient(m, [0.0])
        assert g.tolist() == [1.0, 0.0]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_independent_of_features(self, seed):
        rng = np.random.default_rng(seed)
        m = make_model("mulfa", (4, 3), seed=seed % 7)
        x = rng.uniform(size=(8, 2))
        i1, w1 = grad_wrt_features(m.with_features(rng.normal(size=m.features.shape)), x)
        i2, w2 = grad_wrt_features(m.with_features(rng.normal(size=m.features.shape)), x)
        assert np.array_equal(i1, i2) and np.array_equal(w1, w2)

    @pytest.mark.parametrize("variant", ["multilinear", "gaussian", "mulfa"])
    def test_matches_finite_differences(self, variant, rng):
        m = make_model(variant, (4, 4), features="random")
        x = rng.uniform(size=2)
        dense = dense_gradient(m, x)
        fd = np.zeros(m.num_nodes)
        for i in np.nonzero(dense)[0]:
            up, dn = m.features.copy(), m.features.copy()
            up[i] += 1e-6
            dn[i] -= 1e-6
            fd[i] = (m.with_features(up)(x)[0, 0] - m.with_features(dn)(x)[0, 0]) / 2e-6
        touched = dense != 0
        assert np.allclose(fd[touched], dense[touched], rtol=1e-7, atol=1e-9)


class TestValidation:
    def test_wrong_feature_rows(self):
        with pytest.raises(ConfigError):
            GridModel(GridGeometry.regular([3]), Multilinear(), np.zeros((4, 1)))

    def test_nonfinite_features(self):
        with pytest.raises(ConfigError):
            GridModel(GridGeometry.regular([2]), Multilinear(), [[0.0], [np.nan]])

    def test_multilinear_needs_regular(self):
        with pytest.raises(ConfigError):
            GridModel.create(GridGeometry.irregular([0.0, 1.0], k=1), Multilinear())

    def test_mulfa_dimension(self):
        with pytest.raises(ConfigError):
            GridModel.create(GridGeometry.regular([3, 3]), MulFA(MulFAParams.init(1, rng=0)))

    def test_uniform_init_is_small(self):
        m = GridModel.create(GridGeometry.regular([5]), Multilinear(), init="uniform", rng=0)
        assert np.all(np.abs(m.features) <= 1e-4) and np.any(m.features != 0)

    def test_dataset_shapes(self):
        d = Dataset([0.1, 0.2], [1.0, 2.0])
        assert d.X.shape == (2, 1) and d.Y.shape == (2, 1)
        with pytest.raises(ValueError):
            Dataset([0.1, 0.2], [1.0])

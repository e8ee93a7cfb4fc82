import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridtangent import (Dataset, PreconditionError, TrainConfig,
                         bound_difference_map, closed_form_outputs, generalization_delta,
                         gradient_matrix, gtk_compute, gtk_spectrum, train, weight_change_bound_check)
from gridtangent.gtk import profile_from_gtk

from conftest import make_model

VARIANTS = ["multilinear", "gaussian", "mulfa"]


class TestGtk:
    def test_two_point_fixture(self):
        m = make_model("multilinear", (2,))
        assert np.allclose(gtk_compute(m, [[0.0], [0.5]]).G, [[1, 0.5], [0.5, 0.5]])

    def test_single_node_point(self):
        m = make_model("multilinear", (3, 3))
        assert gtk_compute(m, [[0.5, 0.5]]).G.tolist() == [[1.0]]

    def test_duplicate_point_rank_one(self, rng):
        m = make_model("mulfa", (4, 4))
        x = rng.uniform(size=2)
        G = gtk_compute(m, np.stack([x, x])).G
        assert np.linalg.matrix_rank(G, tol=1e-10) == 1
        assert G[0, 0] == pytest.approx(G[0, 1]) == pytest.approx(G[1, 1])

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_equals_gram_of_gradient_matrix(self, variant, rng):
        m = make_model(variant, (5, 4), seed=3)
        X = rng.uniform(size=(25, 2))
        Z = gradient_matrix(m, X)
        gm = gtk_compute(m, X)
        assert np.max(np.abs(Z.T @ Z - gm.G)) <= 1e-12
        assert gm.symmetry_residual == 0.0
        assert gm.lambda_min >= -1e-8

    def test_brute_force_inner_products(self, rng):
        m = make_model("gaussian", (3, 3))
        X = rng.uniform(size=(6, 2))
        cols = [gradient_matrix(m, x[None])[:, 0] for x in X]
        G = np.array([[sum(a[r] * b[r] for r in range(m.num_nodes)) for b in cols] for a in cols])
        assert np.allclose(gtk_compute(m, X).G, G, atol=1e-14)

    def test_node_point_gradient_is_one_hot(self):
        m = make_model("multilinear", (3,))
        assert gradient_matrix(m, [[0.5]])[:, 0].tolist() == [0.0, 1.0, 0.0]


class TestClosedForm:
    def test_zero_steps(self):
        assert np.all(closed_form_outputs(np.eye(2), [1.0, 1.0], 0.1, 0) == 0)

    def test_one_step(self):
        G = np.diag([1.0, 0.5])
        assert np.allclose(closed_form_outputs(G, [1.0, 1.0], 0.1, 1), [0.1, 0.05])

    def test_converges(self):
        G = np.diag([1.0, 0.5])
        assert np.allclose(closed_form_outputs(G, [1.0, 1.0], 0.1, 10_000), [1, 1], atol=1e-6)

    def test_eig_and_power_agree(self, rng):
        A = rng.normal(size=(6, 6))
        G = A @ A.T / 6
        Y = rng.normal(size=(6, 2))
        lr = 0.5 / np.linalg.eigvalsh(G)[-1]
        steps = [0, 3, 17, 120]
        assert np.allclose(closed_form_outputs(G, Y, lr, steps, "eig"),
                           closed_form_outputs(G, Y, lr, steps, "power"), atol=1e-12)

    def test_warns_when_divergent(self):
        with pytest.warns(RuntimeWarning):
            closed_form_outputs(np.diag([30.0]), [1.0], 0.1, 5)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_matches_training(self, variant, rng):
        m = make_model(variant, (6, 6), seed=5)
        X = rng.uniform(size=(12, 2))
        Y = rng.uniform(size=(12, 1))
        G = gtk_compute(m, X).G
        lr = 0.5 / np.linalg.eigvalsh(G)[-1]
        _, hist = train(m, Dataset(X, Y), TrainConfig(lr=lr, steps=300, snapshot=25))
        pred = closed_form_outputs(G, Y, lr, hist.steps)
        assert np.max(np.abs(pred - np.asarray(hist.outputs))) <= 1e-8


class TestDelta:
    def test_identity(self):
        assert generalization_delta(np.eye(2), [1.0, 0.0], ridge=0).delta == pytest.approx(1.0)

    def test_two_point_fixture(self):
        G = [[1, 0.5], [0.5, 0.5]]
        assert generalization_delta(G, [1.0, 1.0], ridge=0).delta == pytest.approx(2.0)

    def test_zero_targets(self):
        assert generalization_delta(np.eye(3), np.zeros(3)).delta == 0.0

    def test_matches_solve(self, rng):
        A = rng.normal(size=(5, 5))
        G = A @ A.T + 0.1 * np.eye(5)
        Y = rng.normal(size=(5, 3))
        want = sum(Y[:, c] @ np.linalg.solve(G, Y[:, c]) for c in range(3))
        assert generalization_delta(G, Y, ridge=0).delta == pytest.approx(want, rel=1e-10)

    def test_flags_singular(self):
        rep = generalization_delta(np.ones((2, 2)), [1.0, -1.0])
        assert rep.flagged and rep.delta >= 0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4))
        G = A @ A.T + 0.5 * np.eye(4)
        Y = rng.normal(size=4)
        p = rng.permutation(4)
        d1 = generalization_delta(G, Y, ridge=0).delta
        d2 = generalization_delta(G[np.ix_(p, p)], Y[p], ridge=0).delta
        assert d1 == pytest.approx(d2, rel=1e-10)


class TestBoundMap:
    def test_identical_models(self):
        m = make_model("mulfa", (8, 8))
        diff, _, _ = bound_difference_map(m, m, [[0.3, 0.3], [0.7, 0.7]], resolution=21)
        assert np.all(diff == 0)

    def test_sign_symmetry(self):
        a = make_model("mulfa", (8, 8))
        b = make_model("multilinear", (8, 8))
        diff, ys, _ = bound_difference_map(a, b, [[0.3, 0.3], [0.7, 0.7]], resolution=31)
        assert np.array_equal(ys, -ys[::-1])
        assert np.array_equal(diff, diff[::-1, ::-1])

    def test_diagonal_quadratic_forms(self):
        y = [1.0, 0.0]
        diff = generalization_delta(np.eye(2), y, ridge=0).delta - generalization_delta(2 * np.eye(2), y, ridge=0).delta
        assert diff == pytest.approx(0.5)

    def test_node_aligned_pair_has_identity_gtk(self):
        m = make_model("multilinear", (3,))
        diff, ys, flags = bound_difference_map(m, make_model("gaussian", (3,), sigma=0.2),
                                               [[0.0], [1.0]], resolution=3)
        assert ys.tolist() == [-1.0, 0.0, 1.0]
        assert diff[1, 1] == 0.0
        assert flags == (False, False)

    def test_value_against_delta(self):
        a = make_model("multilinear", (2,))
        b = make_model("gaussian", (2,), sigma=0.4)
        X = [[0.2], [0.9]]
        diff, ys, _ = bound_difference_map(a, b, X, resolution=5)
        y = np.array([ys[1], ys[4]])
        want = (generalization_delta(gtk_compute(a, X), y).delta
                - generalization_delta(gtk_compute(b, X), y).delta)
        assert diff[1, 4] == pytest.approx(want, rel=1e-9, abs=1e-9)


def brute_dft(p):
    n = len(p)
    k = np.arange(n // 2 + 1)
    return np.array([abs(sum(p[j] * np.exp(-2j * np.pi * kk * j / n) for j in range(n))) for kk in k])


class TestSpectrum:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_matches_brute_force_dft(self, variant):
        m = make_model(variant, (16,), seed=2)
        rep = gtk_spectrum(m, [0.0], [1.0], n_samples=40)
        assert np.allclose(rep.magnitude, brute_dft(rep.profile), atol=1e-9)
        assert 0.0 <= rep.high_frequency_fraction <= 1.0
        assert np.max(rep.gtk) == pytest.approx(1.0)

    def test_constant_gtk_is_dc_only(self):
        m = make_model("multilinear", (4, 4))
        rep = gtk_spectrum(m, [0.5, 0.5], [0.5, 0.5], n_samples=16)
        assert rep.magnitude[0] > 0
        assert np.all(rep.magnitude[1:] <= 1e-12)
        assert rep.high_frequency_fraction == 0.0

    def test_profile_average(self):
        G = np.array([[1.0, 2.0, 3.0], [2.0, 5.0, 6.0], [3.0, 6.0, 9.0]])
        assert np.allclose(profile_from_gtk(G), [5.0, 4.0, 3.0])

    def test_energy_fraction_definition(self):
        rep = gtk_spectrum(make_model("mulfa", (16,)), [0.0], [1.0], n_samples=32)
        e = rep.magnitude ** 2
        assert rep.high_frequency_fraction == pytest.approx(e[5:].sum() / e.sum())
        assert rep.cumulative_energy_fraction[-1] == pytest.approx(1.0)

    def test_sample_count_validation(self):
        with pytest.raises(ValueError):
            gtk_spectrum(make_model("multilinear", (4,)), [0.0], [1.0], n_samples=7)


class TestWeightBound:
    def test_tight_single_point(self):
        m = make_model("multilinear", (3,))
        data = Dataset([[0.5]], [[0.8]])
        _, hist = train(m, data, TrainConfig(lr=0.5, steps=200, snapshot=10))
        holds, margin = weight_change_bound_check(hist, gtk_compute(m, data.X), data.Y)
        assert holds and abs(margin) <= 1e-6
        assert hist.weight_change[-1] == pytest.approx(0.8)

    def test_zero_targets(self):
        m = make_model("multilinear", (3,))
        data = Dataset([[0.2], [0.9]], [[0.0], [0.0]])
        _, hist = train(m, data, TrainConfig(lr=0.1, steps=10))
        holds, margin = weight_change_bound_check(hist, gtk_compute(m, data.X), data.Y)
        assert holds and max(hist.weight_change) == 0.0

    def test_random_instance(self):
        rng = np.random.default_rng(4)
        m = make_model("multilinear", (12,))
        X = np.sort(rng.choice(np.linspace(0, 1, 12), size=5, replace=False))[:, None]
        X = X + rng.uniform(-0.02, 0.02, size=X.shape)
        data = Dataset(np.clip(X, 0, 1), rng.uniform(size=5))
        G = gtk_compute(m, data.X)
        assert G.lambda_min > 0.1
        _, hist = train(m, data, TrainConfig(lr=0.1, steps=2000, snapshot=50))
        holds, _ = weight_change_bound_check(hist, G, data.Y)
        assert holds

    def test_refuses_joint_mode(self):
        m = make_model("mulfa", (4,))
        data = Dataset([[0.1], [0.6]], [[1.0], [0.0]])
        _, hist = train(m, data, TrainConfig(mode="joint", lr=0.01, steps=3))
        with pytest.raises(PreconditionError):
            weight_change_bound_check(hist, gtk_compute(m, data.X), data.Y)

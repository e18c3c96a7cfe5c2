"""Toy classifiers: manual gradients, GD stepping, and proxy extraction."""

import math

import numpy as np
import pytest

from epic.data import make_blobs
from epic.errors import InvalidInput, NumericalDivergence
from epic.models import (
    LrSchedule,
    ToyModel,
    accuracy,
    extract_proxies,
    gd_step,
    loss_and_grad,
)
from epic.rng import Rng
from epic.training import BatchMode, train


def fd_parameter_gradient(model, X, y, step=1e-5):
    """Central finite differences over every parameter."""
    base = model.params
    out = np.empty_like(base)
    for i in range(base.size):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        lp, _ = loss_and_grad(model.with_params(plus), X, y)
        lm, _ = loss_and_grad(model.with_params(minus), X, y)
        out[i] = (lp - lm) / (2 * step)
    return out


def random_batch(rng, n, m, c):
    X = np.array([rng.uniform(-2, 2) for _ in range(n * m)]).reshape(n, m)
    y = np.array([rng.randbelow(c) for _ in range(n)])
    return X, y


class TestLossAndGrad:
    def test_zero_params_gives_log_c(self):
        for c in (2, 3, 5):
            model = ToyModel("linear", 3, c, 0, np.zeros(c * 3 + c))
            rng = Rng(c)
            X, y = random_batch(rng, 6, 3, c)
            loss, _ = loss_and_grad(model, X, y)
            assert loss == pytest.approx(math.log(c), abs=1e-12)

    def test_linear_matches_finite_differences(self):
        rng = Rng(31)
        for _ in range(60):
            c = 2 + rng.randbelow(3)
            m = 1 + rng.randbelow(3)
            model = ToyModel.initialize("linear", m, c, seed=rng.next_u64())
            X, y = random_batch(rng, 4, m, c)
            _, grad = loss_and_grad(model, X, y)
            np.testing.assert_allclose(
                grad, fd_parameter_gradient(model, X, y), rtol=1e-6, atol=1e-9
            )

    def test_hidden_matches_finite_differences(self):
        rng = Rng(32)
        for _ in range(40):
            c = 2 + rng.randbelow(2)
            m = 1 + rng.randbelow(2)
            model = ToyModel.initialize("one_hidden", m, c, hidden_width=3, seed=rng.next_u64())
            X, y = random_batch(rng, 3, m, c)
            _, grad = loss_and_grad(model, X, y)
            np.testing.assert_allclose(
                grad, fd_parameter_gradient(model, X, y), rtol=1e-6, atol=1e-9
            )

    def test_duplicating_batch_changes_nothing(self):
        rng = Rng(33)
        model = ToyModel.initialize("linear", 2, 3, seed=5)
        X, y = random_batch(rng, 5, 2, 3)
        loss1, grad1 = loss_and_grad(model, X, y)
        loss2, grad2 = loss_and_grad(
            model, np.concatenate([X, X]), np.concatenate([y, y])
        )
        assert loss1 == pytest.approx(loss2, abs=1e-15)
        np.testing.assert_allclose(grad1, grad2, atol=1e-15)

    def test_permutation_invariant(self):
        rng = Rng(34)
        model = ToyModel.initialize("one_hidden", 2, 2, hidden_width=4, seed=6)
        X, y = random_batch(rng, 7, 2, 2)
        perm = rng.sample_indices(7, 7)
        loss1, grad1 = loss_and_grad(model, X, y)
        loss2, grad2 = loss_and_grad(model, X[perm], y[perm])
        assert loss1 == pytest.approx(loss2, abs=1e-12)
        np.testing.assert_allclose(grad1, grad2, atol=1e-12)

    def test_rejects_bad_batches(self):
        model = ToyModel.initialize("linear", 2, 2, seed=0)
        with pytest.raises(InvalidInput):
            loss_and_grad(model, np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(InvalidInput):
            loss_and_grad(model, np.zeros((2, 2)), np.array([0, 5]))


class TestGdStep:
    def test_fixed_point_is_unchanged(self):
        # symmetric two-point batch has an exactly zero gradient at zero params
        model = ToyModel("linear", 2, 2, 0, np.zeros(6))
        X = np.array([[1.5, -0.5], [1.5, -0.5]])
        y = np.array([0, 1])
        stepped = gd_step(model, X, y, 0.1)
        np.testing.assert_array_equal(stepped.params, model.params)

    def test_one_step_matches_symbolic_oracle(self):
        # two-point softmax regression step, expected values derived once
        # with exact symbolic differentiation
        model = ToyModel("linear", 1, 2, 0, np.array([0.2, -0.1, 0.05, -0.05]))
        X = np.array([[1.0], [-2.0]])
        y = np.array([0, 1])
        loss, _ = loss_and_grad(model, X, y)
        assert loss == pytest.approx(0.49354611829002965, abs=1e-14)
        stepped = gd_step(model, X, y, 0.1)
        np.testing.assert_allclose(
            stepped.params,
            [0.25781968387419194, -0.15781968387419194,
             0.05118858355447013, -0.05118858355447013],
            atol=1e-14,
        )

    def test_purity(self):
        model = ToyModel.initialize("linear", 2, 2, seed=1)
        before = model.params.copy()
        gd_step(model, np.array([[1.0, 2.0]]), np.array([0]), 0.5)
        np.testing.assert_array_equal(model.params, before)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected(self):
        model = ToyModel.initialize("linear", 2, 2, seed=1)
        broken = model.with_params(np.full(6, np.inf))
        with pytest.raises(NumericalDivergence):
            gd_step(broken, np.array([[1.0, 2.0]]), np.array([0]), 0.1)


class TestTrain:
    def test_zero_epochs_is_noop(self):
        ds = make_blobs(10, 2, 2, seed=3)
        model = ToyModel.initialize("linear", 2, 2, seed=4)
        out, trace = train(model, ds.clone(), LrSchedule(0.1), 0)
        np.testing.assert_array_equal(out.params, model.params)
        assert trace.losses == []

    def test_separable_blobs_reach_full_accuracy(self):
        ds = make_blobs(30, 2, 2, center_distance=4.0, noise=0.5, seed=9)
        model = ToyModel.initialize("linear", 2, 2, seed=10)
        model, trace = train(model, ds.clone(), LrSchedule(0.5), 200)
        assert trace.accuracies[-1] == 1.0
        assert accuracy(model, ds.features, ds.labels) == 1.0

    def test_identical_seeds_identical_traces(self):
        ds = make_blobs(15, 2, 2, seed=1)
        for batch in (BatchMode(), BatchMode("minibatch", 8, seed=5)):
            m1 = ToyModel.initialize("linear", 2, 2, seed=2)
            m2 = ToyModel.initialize("linear", 2, 2, seed=2)
            out1, t1 = train(m1, ds.clone(), LrSchedule(0.3), 25, batch)
            out2, t2 = train(m2, ds.clone(), LrSchedule(0.3), 25, batch)
            assert t1.losses == t2.losses
            assert t1.accuracies == t2.accuracies
            np.testing.assert_array_equal(out1.params, out2.params)

    def test_full_batch_loss_non_increasing_below_stability(self):
        ds = make_blobs(20, 2, 2, center_distance=3.0, noise=0.8, seed=7)
        model = ToyModel.initialize("linear", 2, 2, seed=8)
        _, trace = train(model, ds.clone(), LrSchedule(0.2), 80)
        diffs = np.diff(trace.losses)
        assert (diffs <= 1e-12).all()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_carries_epoch(self):
        ds = make_blobs(10, 2, 2, seed=3)
        model = ToyModel.initialize("linear", 2, 2, seed=4)
        with pytest.raises(NumericalDivergence) as exc:
            train(model, ds.clone(), LrSchedule(1e308), 50)
        assert exc.value.epoch is not None


class TestExtractProxies:
    def test_zero_model_gives_uniform_residuals(self):
        ds = make_blobs(5, 2, 2, seed=11)
        model = ToyModel("linear", 2, 2, 0, np.zeros(6))
        pm = extract_proxies(model, ds.active_features(), ds.active_labels())
        for row, label in zip(pm.rows, ds.active_labels()):
            expected = np.full(2, 0.5)
            expected[label] -= 1.0
            np.testing.assert_allclose(row, expected, atol=0)

    def test_row_count_tracks_active_set(self):
        ds = make_blobs(6, 2, 2, seed=12)
        model = ToyModel.initialize("linear", 2, 2, seed=13)
        pm = extract_proxies(model, ds.active_features(), ds.active_labels())
        assert pm.n == 12

    def test_full_mode_matches_last_layer_gradient_slice(self):
        rng = Rng(14)
        for arch, hidden in (("linear", 0), ("one_hidden", 4)):
            model = ToyModel.initialize(arch, 3, 2, hidden_width=max(hidden, 1), seed=15)
            X, y = random_batch(rng, 6, 3, 2)
            pm = extract_proxies(model, X, y, mode="last_layer_full")
            sl = model.last_layer_slice()
            for i in range(6):
                _, g = loss_and_grad(model, X[i], y[i])
                np.testing.assert_allclose(pm.rows[i], g[sl], rtol=1e-12, atol=1e-12)

    def test_dimensions_per_mode(self):
        model = ToyModel.initialize("one_hidden", 3, 4, hidden_width=5, seed=16)
        X = np.zeros((2, 3))
        y = np.array([0, 3])
        assert extract_proxies(model, X, y, "class_residual").d == 4
        assert extract_proxies(model, X, y, "last_layer_full").d == 4 * (5 + 1)


class TestLrSchedule:
    def test_step_decay(self):
        sched = LrSchedule(0.1, (100, 150), 10.0)
        assert sched.lr_at(0) == 0.1
        assert sched.lr_at(99) == 0.1
        assert sched.lr_at(100) == pytest.approx(0.01)
        assert sched.lr_at(150) == pytest.approx(0.001)
        assert sched.lr_at(500) == pytest.approx(0.001)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInput):
            LrSchedule(0.0)
        with pytest.raises(InvalidInput):
            LrSchedule(0.1, (), 0.0)

import numpy as np
import pytest
from sklearn.base import clone

from splitgp.learner import UpdateOutcome
from splitgp.models import IolResidualModel, SplitResidualModel, check_features


def training_batch(rng, n):
    Z = rng.uniform([-0.08, -0.08, -0.9], [0.08, 0.08, 0.9], size=(n, 3))
    Z = Z[np.abs(Z[:, 0] - Z[:, 1]) <= 0.095]
    Y = np.column_stack([np.sin(10 * Z[:, 0]), Z[:, 1] ** 2, 0.05 * Z[:, 2]])
    return Z, Y


class TestSplitResidualModel:
    def test_sklearn_param_round_trip(self):
        m = SplitResidualModel(capacity=7, speed_gate=3.0)
        params = m.get_params()
        assert params["capacity"] == 7
        m2 = clone(m)
        assert m2.get_params()["speed_gate"] == 3.0

    def test_unfitted_predicts_prior(self):
        m = SplitResidualModel()
        mean, std = m.predict(np.zeros((4, 3)), return_std=True)
        np.testing.assert_array_equal(mean, np.zeros((4, 3)))
        np.testing.assert_allclose(std, np.sqrt(0.05), atol=1e-12)

    def test_partial_fit_accumulates(self):
        rng = np.random.default_rng(5)
        Z, Y = training_batch(rng, 300)
        m = SplitResidualModel()
        m.partial_fit(Z[:100], Y[:100], speed=10.0)
        n1 = m.n_samples_
        m.partial_fit(Z[100:], Y[100:], speed=10.0)
        assert m.n_samples_ >= n1
        assert m.n_cells_ >= 1
        assert len(m.outcomes_) == Z.shape[0]
        assert all(isinstance(o, UpdateOutcome) for o in m.outcomes_)

    def test_fit_resets(self):
        rng = np.random.default_rng(6)
        Z, Y = training_batch(rng, 100)
        m = SplitResidualModel()
        m.fit(Z, Y, speed=10.0)
        first = m.n_samples_
        m.fit(Z, Y, speed=10.0)
        assert m.n_samples_ == first

    def test_prediction_tracks_signal(self):
        rng = np.random.default_rng(7)
        Z, Y = training_batch(rng, 600)
        m = SplitResidualModel().fit(Z, Y, speed=10.0)
        mean = m.predict(Z[:50])
        resid = Y[:50] - mean
        assert np.sqrt(np.mean(resid**2)) < 0.5 * np.sqrt(np.mean(Y[:50] ** 2))

    def test_speed_gate_blocks_learning(self):
        rng = np.random.default_rng(8)
        Z, Y = training_batch(rng, 50)
        m = SplitResidualModel().fit(Z, Y, speed=2.0)
        assert m.n_samples_ == 0
        assert all(o.kind == UpdateOutcome.REJECTED_SPEED_GATE for o in m.outcomes_)

    def test_input_validation(self):
        m = SplitResidualModel()
        with pytest.raises(ValueError):
            m.predict(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            m.partial_fit(np.full((2, 3), np.inf), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            check_features([[0.0, 0.1]], n_features=3)


class TestIolResidualModel:
    def test_same_interface(self):
        rng = np.random.default_rng(9)
        Z, Y = training_batch(rng, 80)
        m = IolResidualModel(capacity_total=60).fit(Z, Y, speed=10.0)
        assert 0 < m.n_samples_ <= 60
        mean, std = m.predict(Z[:5], return_std=True)
        assert mean.shape == (5, 3) and std.shape == (5, 3)

    def test_unfitted_predicts_prior(self):
        m = IolResidualModel()
        mean = m.predict(np.zeros((2, 3)))
        np.testing.assert_array_equal(mean, np.zeros((2, 3)))

import numpy as np
import pytest

from splitgp.bcm import (
    BcmConfig,
    aggregate,
    bcm_predict,
    bcm_predict_batch,
    full_gp_predict,
    full_gp_predict_batch,
)
from splitgp.errors import CapExceeded, NumericalError
from splitgp.gp import Hyperparams, posterior_batch
from splitgp.learner import DictionaryStore, LearnerConfig, LocalDictionary
from splitgp.region import RegionSpec, cell_of
from splitgp.vehicle import TireParams, VehicleParams
from tests.conftest import naive_posterior

PARAMS = VehicleParams()
TIRES = TireParams()
SPEC = RegionSpec()


def store_with_dicts(rng, centers, per_dict=8, hyp=None):
    """Store populated by direct dictionary construction around given centers."""
    hyp = hyp or Hyperparams()
    store = DictionaryStore(hyp, SPEC, PARAMS, TIRES, LearnerConfig())
    counter = 0
    for c in centers:
        c = np.asarray(c, dtype=float)
        Z = c + rng.normal(0, 0.004, size=(per_dict, 3))
        Y = rng.normal(0, 0.05, size=(per_dict, 3))
        cell = cell_of(c, SPEC)
        store.cells[cell] = LocalDictionary(cell, Z, Y,
                                            np.arange(counter, counter + per_dict), hyp)
        counter += per_dict
    return store


class TestSingleMemberIdentity:
    def test_reduces_to_local_posterior(self, hyp):
        rng = np.random.default_rng(79)
        store = store_with_dicts(rng, [[0.01, 0.01, 0.1]], per_dict=10)
        d = store.dictionaries()[0]
        Zq = rng.uniform(-0.05, 0.05, size=(1000, 3))
        mean_b, var_b = bcm_predict_batch(store, Zq, hyp)
        mean_d, var_d = d.predict(Zq)
        assert np.max(np.abs(mean_b - mean_d)) < 1e-12
        assert np.max(np.abs(var_b - var_d)) < 1e-12


class TestEmptyMemberNeutrality:
    def test_prior_member_cancels(self, hyp):
        rng = np.random.default_rng(83)
        means = rng.normal(0, 0.05, size=(4, 1000, 3))
        variances = rng.uniform(0.2, 0.9, size=(4, 1000, 3)) * hyp.sf2
        m0, v0 = aggregate(means, variances, hyp.sf2)
        prior_member_mean = np.zeros((1, 1000, 3))
        prior_member_var = np.broadcast_to(hyp.sf2, (1, 1000, 3))
        m1, v1 = aggregate(np.vstack([means, prior_member_mean]),
                           np.vstack([variances, prior_member_var]), hyp.sf2)
        assert np.max(np.abs(m0 - m1)) < 1e-12
        assert np.max(np.abs(v0 - v1)) < 1e-12


class TestCommitteeBehavior:
    def test_far_apart_members_defer_to_local_expert(self, hyp):
        rng = np.random.default_rng(89)
        # two clusters separated by far more than 6 length scales in torque
        store = store_with_dicts(rng, [[0.0, 0.0, -0.9], [0.0, 0.0, 0.9]])
        near = store.dictionaries()[0] if store.nonempty_cells()[0][2] < 10 \
            else store.dictionaries()[1]
        zq = np.array([0.001, 0.001, -0.89])
        pred = bcm_predict(store, zq, hyp)
        local_mean, _ = near.predict(zq[None])
        sf = np.sqrt(hyp.sf2)
        assert np.all(np.abs(pred.mean - local_mean[0]) < 1e-3 * sf)
        full = full_gp_predict(store, zq, hyp)
        assert np.all(np.abs(pred.mean - full.mean) < 0.05 * sf)

    def test_empty_store_returns_prior(self, hyp):
        store = DictionaryStore(hyp, SPEC, PARAMS, TIRES)
        pred = bcm_predict(store, np.zeros(3), hyp)
        np.testing.assert_array_equal(pred.mean, np.zeros(3))
        np.testing.assert_array_equal(pred.var, hyp.sf2)

    def test_precision_accounting(self, hyp):
        rng = np.random.default_rng(97)
        store = store_with_dicts(rng, [[0.0, 0.0, 0.0], [0.03, 0.03, 0.3],
                                       [-0.04, 0.0, -0.4]])
        Zq = rng.uniform(-0.05, 0.05, size=(200, 3))
        _, var_hat = bcm_predict_batch(store, Zq, hyp)
        member_vars = np.stack([d.predict(Zq)[1] for d in store.dictionaries()])
        assert np.all(member_vars <= hyp.sf2 + 1e-12)
        assert np.all(var_hat <= member_vars.min(axis=0) + 1e-12)

    def test_order_invariance(self, hyp):
        rng = np.random.default_rng(101)
        means = rng.normal(0, 0.05, size=(8, 50, 3))
        variances = rng.uniform(0.1, 0.99, size=(8, 50, 3)) * hyp.sf2
        m0, v0 = aggregate(means, variances, hyp.sf2)
        for _ in range(5):
            perm = rng.permutation(8)
            m1, v1 = aggregate(means[perm], variances[perm], hyp.sf2)
            assert np.max(np.abs(m0 - m1)) < 1e-12
            assert np.max(np.abs(v0 - v1)) < 1e-12

    def test_negative_precision_raises_or_clamps(self, hyp):
        means = np.zeros((3, 1, 3))
        variances = np.full((3, 1, 3), 2.0) * hyp.sf2  # inflated beyond the prior
        with pytest.raises(NumericalError):
            aggregate(means, variances, hyp.sf2)
        with pytest.warns(RuntimeWarning):
            _, var = aggregate(means, variances, hyp.sf2, clamp=True)
        assert np.all(var > 0)

    def test_neighborhood_radius_restricts_members(self, hyp):
        rng = np.random.default_rng(103)
        store = store_with_dicts(rng, [[0.0, 0.0, -0.9], [0.0, 0.0, 0.9]])
        zq = np.array([0.001, 0.001, -0.89])
        cfg = BcmConfig(neighborhood_radius=1)
        pred_near = bcm_predict(store, zq, hyp, cfg)
        only_near = DictionaryStore(hyp, SPEC, PARAMS, TIRES)
        near_cell = min(store.nonempty_cells(), key=lambda c: c[2])
        only_near.cells[near_cell] = store.cells[near_cell]
        pred_ref = bcm_predict(only_near, zq, hyp)
        np.testing.assert_allclose(pred_near.mean, pred_ref.mean, atol=1e-14)
        np.testing.assert_allclose(pred_near.var, pred_ref.var, atol=1e-14)

    def test_neighborhood_radius_prior_when_no_members(self, hyp):
        rng = np.random.default_rng(107)
        store = store_with_dicts(rng, [[0.0, 0.0, 0.9]])
        cfg = BcmConfig(neighborhood_radius=1)
        pred = bcm_predict(store, np.array([0.0, 0.0, -0.9]), hyp, cfg)
        np.testing.assert_array_equal(pred.mean, np.zeros(3))
        np.testing.assert_array_equal(pred.var, hyp.sf2)


class TestFullGp:
    def test_single_dictionary_equals_exact_posterior(self, hyp):
        rng = np.random.default_rng(109)
        store = store_with_dicts(rng, [[0.01, 0.0, 0.1]], per_dict=10)
        d = store.dictionaries()[0]
        Zq = rng.uniform(-0.05, 0.05, size=(50, 3))
        mean_f, var_f = full_gp_predict_batch(store, Zq, hyp)
        mean_e, var_e = posterior_batch(d.Z, d.Y, Zq, hyp)
        np.testing.assert_allclose(mean_f, mean_e, atol=1e-14)
        np.testing.assert_allclose(var_f, var_e, atol=1e-14)

    def test_matches_naive_oracle(self, hyp):
        rng = np.random.default_rng(113)
        store = store_with_dicts(rng, [[0.0, 0.0, -0.3], [0.02, 0.02, 0.2],
                                       [-0.03, 0.01, 0.6]], per_dict=6)
        Z, Y = store.all_data()
        assert Z.shape[0] == 18
        for _ in range(10):
            zq = rng.uniform(-0.05, 0.05, size=3)
            pred = full_gp_predict(store, zq, hyp)
            mean_ref, var_ref = naive_posterior(Z, Y, zq, hyp)
            np.testing.assert_allclose(pred.mean, mean_ref, atol=1e-10)
            np.testing.assert_allclose(pred.var, var_ref, atol=1e-10)

    def test_cap_exceeded(self, hyp):
        rng = np.random.default_rng(127)
        store = store_with_dicts(rng, [[0.0, 0.0, 0.0]], per_dict=10)
        with pytest.raises(CapExceeded):
            full_gp_predict(store, np.zeros(3), hyp, cap=5)

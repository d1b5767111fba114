"""Bayesian Committee Machine aggregation of per-cell GP predictions.

Each nonempty dictionary contributes an independent posterior; the committee
combines them per output by precision weighting against the prior:

    1 / var_hat = sum_i 1 / var_i - (K' - 1) / prior_var
    mean_hat    = var_hat * sum_i mean_i / var_i

A member predicting exactly the prior cancels out of both sums, so
aggregating only nonempty dictionaries is lossless. A dense full-GP
evaluation over the union of all dictionaries is provided as the
benchmark/oracle counterpart.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CapExceeded, NumericalError
from .gp import N_OUTPUTS, Hyperparams, Prediction, posterior_batch
from .region import cell_of

NEG_PRECISION_EPS = 1e-8  # clamp floor for 1/var_hat, as a multiple of 1/prior


@dataclass(frozen=True)
class BcmConfig:
    """Committee options. prior_var of None uses the kernel's signal variance."""

    prior_var: tuple | None = None
    neighborhood_radius: int | None = None  # Chebyshev cell distance cutoff
    clamp_negative_precision: bool = False  # keep the control loop alive


def _prior(hyp: Hyperparams, cfg: BcmConfig) -> np.ndarray:
    if cfg.prior_var is None:
        return hyp.sf2
    prior = np.asarray(cfg.prior_var, dtype=float)
    if prior.shape != (N_OUTPUTS,) or np.any(prior <= 0):
        raise ValueError("prior_var must be 3 positive variances")
    return prior


def aggregate(means, variances, prior_var, clamp: bool = False):
    """Combine member posteriors (lists/arrays of shape (n, 3)) into one.

    Exposed separately so identity checks can inject synthetic members.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    n_members = means.shape[0]
    precision = np.sum(1.0 / variances, axis=0) - (n_members - 1) / prior_var
    floor = NEG_PRECISION_EPS / prior_var
    bad = precision <= 0
    if np.any(bad):
        if not clamp:
            raise NumericalError(
                "non-positive committee precision; members violate the "
                "independence assumption"
            )
        warnings.warn("clamped non-positive committee precision", RuntimeWarning)
        precision = np.where(bad, floor, precision)
    var_hat = 1.0 / precision
    mean_hat = var_hat * np.sum(means / variances, axis=0)
    return mean_hat, var_hat


def bcm_predict_batch(store, Zq, hyp: Hyperparams, cfg: BcmConfig | None = None):
    """Committee prediction at query rows Zq, shapes (n, 3) mean / variance."""
    cfg = cfg or BcmConfig()
    prior = _prior(hyp, cfg)
    Zq = np.atleast_2d(np.asarray(Zq, dtype=float))
    nq = Zq.shape[0]

    dicts = store.dictionaries()
    if cfg.neighborhood_radius is not None and dicts:
        q_cells = np.array([cell_of(z, store.region) for z in Zq])  # (nq, 3)

    if not dicts:
        return np.zeros((nq, N_OUTPUTS)), np.broadcast_to(prior, (nq, N_OUTPUTS)).copy()

    precision = np.zeros((nq, N_OUTPUTS))
    weighted_mean = np.zeros((nq, N_OUTPUTS))
    n_members = np.zeros((nq, 1))
    for d in dicts:
        mean_i, var_i = d.predict(Zq)
        if cfg.neighborhood_radius is not None:
            dist = np.max(np.abs(q_cells - np.asarray(d.cell)), axis=1)
            mask = (dist <= cfg.neighborhood_radius)[:, None]
        else:
            mask = np.ones((nq, 1))
        precision += mask / var_i
        weighted_mean += mask * mean_i / var_i
        n_members += mask

    precision -= (n_members - 1.0) / prior
    floor = NEG_PRECISION_EPS / prior
    bad = precision <= 0
    if np.any(bad):
        if not cfg.clamp_negative_precision:
            raise NumericalError(
                "non-positive committee precision; members violate the "
                "independence assumption"
            )
        warnings.warn("clamped non-positive committee precision", RuntimeWarning)
        precision = np.where(bad, np.broadcast_to(floor, precision.shape), precision)

    var_hat = 1.0 / precision
    mean_hat = var_hat * weighted_mean
    # queries whose neighborhood is empty revert to the prior
    empty = (n_members == 0)
    if np.any(empty):
        mean_hat = np.where(empty, 0.0, mean_hat)
        var_hat = np.where(empty, prior, var_hat)
    return mean_hat, var_hat


def bcm_predict(store, z_star, hyp: Hyperparams, cfg: BcmConfig | None = None) -> Prediction:
    """Committee prediction at a single query point."""
    mean, var = bcm_predict_batch(store, np.atleast_2d(z_star), hyp, cfg)
    return Prediction(mean=mean[0], var=var[0])


def full_gp_predict_batch(store, Zq, hyp: Hyperparams, cap: int = 3000):
    """Exact GP over the union of all dictionaries (benchmark/oracle only).

    Re-factorizes the full kernel matrix on every call, as a streaming store
    invalidates any cached factorization.
    """
    Z, Y = store.all_data()
    if Z.shape[0] > cap:
        raise CapExceeded(f"{Z.shape[0]} samples exceed the full-GP cap {cap}")
    return posterior_batch(Z, Y, Zq, hyp)


def full_gp_predict(store, z_star, hyp: Hyperparams, cap: int = 3000) -> Prediction:
    mean, var = full_gp_predict_batch(store, np.atleast_2d(z_star), hyp, cap)
    return Prediction(mean=mean[0], var=var[0])

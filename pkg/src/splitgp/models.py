"""Scikit-learn style estimators wrapping the online residual learner.

Both estimators consume feature rows Z = (alpha_f, alpha_r, T / t_max) and
3-dim velocity-state residual labels. `partial_fit` streams samples through
the admission logic one row at a time; `predict` aggregates the stored
dictionaries. An unfitted model predicts the GP prior (zero mean), which is
the intended behavior for a residual correction.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .bcm import BcmConfig, bcm_predict_batch
from .gp import Hyperparams
from .learner import DictionaryStore, FlatStore, LearnerConfig
from .region import RegionSpec
from .vehicle import TireParams, VehicleParams


def check_features(Z, n_features: int = 3) -> np.ndarray:
    """Validate a feature array: finite float rows of the expected width."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[1] != n_features:
        raise ValueError(f"expected feature rows of width {n_features}, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("features must be finite")
    return Z


def check_labels(Y, n_rows: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.shape != (n_rows, 3):
        raise ValueError(f"expected labels of shape ({n_rows}, 3), got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("labels must be finite")
    return Y


class SplitResidualModel(BaseEstimator, RegressorMixin):
    """Partitioned local-dictionary residual model with committee read-out."""

    def __init__(self, length_scales=(0.04, 0.04, 0.2), signal_variance=0.05,
                 noise=(1e-4, 1e-4, 2.5e-5), alpha_max=0.18, dalpha_max=0.10,
                 p_long=0.9, p_ellipse=0.95, t_max=1000.0,
                 cell_edges=(0.02, 0.02, 0.1), capacity=10,
                 gain_threshold_ratio=1e-4, speed_gate=5.0,
                 neighborhood_radius=None, clamp_negative_precision=True,
                 vehicle_params=None, tire_params=None):
        self.length_scales = length_scales
        self.signal_variance = signal_variance
        self.noise = noise
        self.alpha_max = alpha_max
        self.dalpha_max = dalpha_max
        self.p_long = p_long
        self.p_ellipse = p_ellipse
        self.t_max = t_max
        self.cell_edges = cell_edges
        self.capacity = capacity
        self.gain_threshold_ratio = gain_threshold_ratio
        self.speed_gate = speed_gate
        self.neighborhood_radius = neighborhood_radius
        self.clamp_negative_precision = clamp_negative_precision
        self.vehicle_params = vehicle_params
        self.tire_params = tire_params

    def _hyperparams(self) -> Hyperparams:
        return Hyperparams(tuple(self.length_scales), self.signal_variance,
                           tuple(self.noise))

    def _region(self) -> RegionSpec:
        return RegionSpec(self.alpha_max, self.dalpha_max, self.p_long,
                          self.p_ellipse, self.t_max, tuple(self.cell_edges))

    def _ensure_store(self):
        if not hasattr(self, "store_"):
            self.store_ = DictionaryStore(
                self._hyperparams(), self._region(),
                self.vehicle_params or VehicleParams(),
                self.tire_params or TireParams(),
                LearnerConfig(self.capacity, self.gain_threshold_ratio, self.speed_gate),
            )
            self.outcomes_ = []
        return self.store_

    def fit(self, Z, y, speed=None):
        """Reset the store and stream all samples through it."""
        for attr in ("store_", "outcomes_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(Z, y, speed=speed)

    def partial_fit(self, Z, y, speed=None):
        """Offer sample rows to the learner; rejected rows are recorded, not errors."""
        Z = check_features(Z)
        Y = check_labels(y, Z.shape[0])
        store = self._ensure_store()
        if speed is None:
            speeds = [None] * Z.shape[0]
        else:
            speeds = np.broadcast_to(np.asarray(speed, dtype=float), (Z.shape[0],))
        for zi, yi, si in zip(Z, Y, speeds):
            self.outcomes_.append(store.try_insert(zi, yi, speed=si))
        return self

    def predict(self, Z, return_std: bool = False):
        """Committee posterior mean (n, 3); optionally also the std dev (n, 3)."""
        Z = check_features(Z)
        store = self._ensure_store()
        cfg = BcmConfig(neighborhood_radius=self.neighborhood_radius,
                        clamp_negative_precision=self.clamp_negative_precision)
        mean, var = bcm_predict_batch(store, Z, self._hyperparams(), cfg)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    @property
    def n_samples_(self) -> int:
        return self.store_.total_samples() if hasattr(self, "store_") else 0

    @property
    def n_cells_(self) -> int:
        return len(self.store_.cells) if hasattr(self, "store_") else 0


class IolResidualModel(BaseEstimator, RegressorMixin):
    """Full-set baseline: same admission rule over one undivided dictionary."""

    def __init__(self, length_scales=(0.04, 0.04, 0.2), signal_variance=0.05,
                 noise=(1e-4, 1e-4, 2.5e-5), alpha_max=0.18, dalpha_max=0.10,
                 p_long=0.9, p_ellipse=0.95, t_max=1000.0,
                 capacity_total=4000, gain_threshold_ratio=1e-4, speed_gate=5.0,
                 vehicle_params=None, tire_params=None):
        self.length_scales = length_scales
        self.signal_variance = signal_variance
        self.noise = noise
        self.alpha_max = alpha_max
        self.dalpha_max = dalpha_max
        self.p_long = p_long
        self.p_ellipse = p_ellipse
        self.t_max = t_max
        self.capacity_total = capacity_total
        self.gain_threshold_ratio = gain_threshold_ratio
        self.speed_gate = speed_gate
        self.vehicle_params = vehicle_params
        self.tire_params = tire_params

    def _ensure_store(self):
        if not hasattr(self, "store_"):
            hyp = Hyperparams(tuple(self.length_scales), self.signal_variance,
                              tuple(self.noise))
            region = RegionSpec(self.alpha_max, self.dalpha_max, self.p_long,
                                self.p_ellipse, self.t_max)
            self.store_ = FlatStore(hyp, region,
                                    self.vehicle_params or VehicleParams(),
                                    self.tire_params or TireParams(),
                                    self.capacity_total,
                                    self.gain_threshold_ratio, self.speed_gate)
            self.outcomes_ = []
        return self.store_

    def fit(self, Z, y, speed=None):
        for attr in ("store_", "outcomes_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(Z, y, speed=speed)

    def partial_fit(self, Z, y, speed=None):
        Z = check_features(Z)
        Y = check_labels(y, Z.shape[0])
        store = self._ensure_store()
        if speed is None:
            speeds = [None] * Z.shape[0]
        else:
            speeds = np.broadcast_to(np.asarray(speed, dtype=float), (Z.shape[0],))
        for zi, yi, si in zip(Z, Y, speeds):
            self.outcomes_.append(store.try_insert(zi, yi, speed=si))
        return self

    def predict(self, Z, return_std: bool = False):
        """Exact posterior of the flat dictionary (cached factorizations)."""
        Z = check_features(Z)
        store = self._ensure_store()
        if store.dictionary is None:
            hyp = Hyperparams(tuple(self.length_scales), self.signal_variance,
                              tuple(self.noise))
            mean = np.zeros((Z.shape[0], 3))
            var = np.broadcast_to(hyp.sf2, (Z.shape[0], 3)).copy()
        else:
            mean, var = store.dictionary.predict(Z)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    @property
    def n_samples_(self) -> int:
        return self.store_.total_samples() if hasattr(self, "store_") else 0

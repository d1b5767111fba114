"""Exact Gaussian-process regression with a squared-exponential kernel.

Three residual outputs (delta v_x, delta v_y, delta r) share one kernel
geometry (one set of length scales); the signal variance may differ per
output, and each output has its own observation noise. A small jitter
proportional to the signal variance is added to every kernel-matrix diagonal
before factorization so that near-duplicate inputs stay factorable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

N_OUTPUTS = 3
JITTER_RATIO = 1e-9  # diagonal jitter as a fraction of the signal variance


@dataclass(frozen=True)
class Hyperparams:
    """Kernel and noise configuration.

    length_scales defines the feature dimensionality (3 for the standard
    slip-angle/torque features, 5 for the high-dimensional ablation variant).
    signal_variance broadcasts to the three outputs.
    """

    length_scales: tuple = (0.04, 0.04, 0.2)
    signal_variance: float | tuple = 0.05
    noise: tuple = (1e-4, 1e-4, 2.5e-5)

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=float)
        sf2 = np.broadcast_to(np.asarray(self.signal_variance, dtype=float), (N_OUTPUTS,)).copy()
        noise = np.asarray(self.noise, dtype=float)
        if ls.ndim != 1 or np.any(ls <= 0):
            raise ValueError("length_scales must be a 1-d tuple of positive values")
        if np.any(sf2 <= 0):
            raise ValueError("signal_variance must be > 0")
        if noise.shape != (N_OUTPUTS,) or np.any(noise <= 0):
            raise ValueError(f"noise must be {N_OUTPUTS} positive variances")
        object.__setattr__(self, "_ls", ls)
        object.__setattr__(self, "_sf2", sf2)
        object.__setattr__(self, "_noise", noise)

    @property
    def ls(self) -> np.ndarray:
        return self._ls

    @property
    def sf2(self) -> np.ndarray:
        """Per-output signal variance, shape (3,)."""
        return self._sf2

    @property
    def noise_var(self) -> np.ndarray:
        return self._noise

    @property
    def n_features(self) -> int:
        return self._ls.shape[0]

    @property
    def jitter(self) -> np.ndarray:
        """Per-output diagonal jitter, shape (3,)."""
        return JITTER_RATIO * self._sf2


def correlation(A, B, ls) -> np.ndarray:
    """Unit-variance SE correlation matrix between row sets A (n,d) and B (m,d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float)) / ls
    B = np.atleast_2d(np.asarray(B, dtype=float)) / ls
    sq = (
        np.sum(A**2, axis=1)[:, None]
        + np.sum(B**2, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-0.5 * np.maximum(sq, 0.0))


def kernel(z_i, z_j, hyp: Hyperparams, output: int = 0) -> float:
    """SE kernel value sigma_f^2 * exp(-1/2 (z_i-z_j)^T M (z_i-z_j))."""
    return float(hyp.sf2[output] * correlation(z_i, z_j, hyp.ls)[0, 0])


def kernel_matrix(Z, hyp: Hyperparams, output: int = 0) -> np.ndarray:
    """Kernel matrix over rows of Z, without jitter."""
    return hyp.sf2[output] * correlation(Z, Z, hyp.ls)


def kernel_vector(Z, z_star, hyp: Hyperparams, output: int = 0) -> np.ndarray:
    """Kernel vector between rows of Z and a single query point, shape (n,)."""
    return hyp.sf2[output] * correlation(Z, np.atleast_2d(z_star), hyp.ls)[:, 0]


@dataclass(frozen=True)
class Prediction:
    """Per-output posterior mean and variance (diagonal)."""

    mean: np.ndarray  # (3,)
    var: np.ndarray   # (3,)


@dataclass(frozen=True)
class LabeledSample:
    """One training record: features z and velocity-state residual y."""

    z: np.ndarray  # (d,)
    y: np.ndarray  # (3,)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise ValueError("sample features and labels must be finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)


def stack_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack a list of LabeledSample into (Z, Y) arrays."""
    if not samples:
        return np.zeros((0, 0)), np.zeros((0, N_OUTPUTS))
    Z = np.stack([s.z for s in samples])
    Y = np.stack([s.y for s in samples])
    return Z, Y


def posterior_batch(Z, Y, Zq, hyp: Hyperparams):
    """Exact per-output posterior at query rows Zq.

    Returns (mean, var) of shapes (n_query, 3). An empty training set reverts
    to the prior: zero mean and the per-output signal variance.
    """
    Zq = np.atleast_2d(np.asarray(Zq, dtype=float))
    nq = Zq.shape[0]
    if Z is None or len(Z) == 0:
        return (np.zeros((nq, N_OUTPUTS)),
                np.broadcast_to(hyp.sf2, (nq, N_OUTPUTS)).copy())
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))

    C = correlation(Z, Z, hyp.ls)
    c_star = correlation(Z, Zq, hyp.ls)  # (n, nq)
    eye = np.eye(Z.shape[0])

    mean = np.empty((nq, N_OUTPUTS))
    var = np.empty((nq, N_OUTPUTS))
    for d in range(N_OUTPUTS):
        A = hyp.sf2[d] * (C + JITTER_RATIO * eye) + hyp.noise_var[d] * eye
        try:
            cho = scipy.linalg.cho_factor(A, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"kernel factorization failed: {exc}") from exc
        k_d = hyp.sf2[d] * c_star
        mean[:, d] = k_d.T @ scipy.linalg.cho_solve(cho, Y[:, d])
        var[:, d] = hyp.sf2[d] - np.sum(k_d * scipy.linalg.cho_solve(cho, k_d), axis=0)
    return mean, np.maximum(var, 0.0)


def posterior(Z, Y, z_star, hyp: Hyperparams) -> Prediction:
    """Exact posterior at a single query point."""
    mean, var = posterior_batch(Z, Y, np.atleast_2d(z_star), hyp)
    return Prediction(mean=mean[0], var=var[0])

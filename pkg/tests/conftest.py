import numpy as np
import pytest

from splitgp.gp import JITTER_RATIO, Hyperparams


@pytest.fixture
def hyp():
    return Hyperparams()


def naive_se_kernel(a, b, ls, sf2):
    """Deliberately plain SE kernel evaluation for oracle computations."""
    d = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) / np.asarray(ls)
    return sf2 * np.exp(-0.5 * float(np.dot(d, d)))


def naive_posterior(Z, Y, zq, hyp):
    """Dense-solve GP posterior via explicit loops and np.linalg.inv.

    Independent of the package's cached/Cholesky code paths; uses the same
    matrix definition (jitter on the diagonal plus per-output noise).
    """
    Z = np.atleast_2d(Z)
    Y = np.atleast_2d(Y)
    n = Z.shape[0]
    mean = np.zeros(3)
    var = np.zeros(3)
    for d in range(3):
        sf2 = hyp.sf2[d]
        K = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                K[i, j] = naive_se_kernel(Z[i], Z[j], hyp.ls, sf2)
        A = K + (JITTER_RATIO * sf2 + hyp.noise_var[d]) * np.eye(n)
        k = np.array([naive_se_kernel(Z[i], zq, hyp.ls, sf2) for i in range(n)])
        A_inv = np.linalg.inv(A)
        mean[d] = k @ A_inv @ Y[:, d]
        var[d] = sf2 - k @ A_inv @ k
    return mean, var


def naive_gain(Z, z_new, hyp):
    """Dense-solve marginal gain (independence measure) oracle."""
    Z = np.atleast_2d(Z)
    n = Z.shape[0]
    sf2 = hyp.sf2[0]
    if n == 0:
        return sf2
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = naive_se_kernel(Z[i], Z[j], hyp.ls, sf2)
    K += JITTER_RATIO * sf2 * np.eye(n)
    k = np.array([naive_se_kernel(Z[i], z_new, hyp.ls, sf2) for i in range(n)])
    return sf2 - k @ np.linalg.inv(K) @ k

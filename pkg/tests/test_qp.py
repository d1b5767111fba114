import itertools

import numpy as np
import pytest

from splitgp.qp import KKT_TOL, STATUS_OPTIMAL, qp_solve


def active_set_reference(P, q, G, h):
    """Brute-force reference: enumerate every active set, solve the KKT
    system, and keep the best feasible point with nonnegative multipliers."""
    n = q.shape[0]
    m = G.shape[0]
    best, best_obj = None, np.inf
    for k in range(m + 1):
        for active in itertools.combinations(range(m), k):
            Ga = G[list(active)]
            K = np.block([[P, Ga.T], [Ga, np.zeros((k, k))]]) if k else P
            rhs = np.concatenate([-q, h[list(active)]]) if k else -q
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if k and np.any(lam < -1e-9):
                continue
            if np.any(G @ x - h > 1e-9):
                continue
            obj = 0.5 * x @ P @ x + q @ x
            if obj < best_obj - 1e-12:
                best_obj, best = obj, x
    return best


class TestQpSolve:
    def test_unconstrained_analytic(self):
        P = np.array([[4.0, 1.0], [1.0, 3.0]])
        q = np.array([-1.0, 2.0])
        res = qp_solve(P, q)
        np.testing.assert_allclose(res.x, np.linalg.solve(P, -q), atol=1e-10)
        assert res.status == STATUS_OPTIMAL

    def test_active_box_bound(self):
        # minimize (x - 2)^2 subject to x <= 1
        res = qp_solve(np.array([[2.0]]), np.array([-4.0]),
                       G=np.array([[1.0]]), h=np.array([1.0]))
        assert res.x[0] == pytest.approx(1.0, abs=1e-8)

    def test_matches_active_set_oracle(self):
        rng = np.random.default_rng(131)
        for trial in range(10):
            n, m = 20, 5
            M = rng.normal(size=(n, n))
            P = M @ M.T + n * np.eye(n)
            q = rng.normal(size=n)
            G = rng.normal(size=(m, n))
            h = rng.uniform(0.1, 1.0, size=m)
            res = qp_solve(P, q, G, h)
            ref = active_set_reference(P, q, G, h)
            assert ref is not None
            np.testing.assert_allclose(res.x, ref, atol=1e-6)
            assert res.kkt_residual < KKT_TOL

    def test_equality_constraints(self):
        P = np.eye(3)
        q = np.zeros(3)
        A = np.array([[1.0, 1.0, 1.0]])
        b = np.array([3.0])
        res = qp_solve(P, q, A=A, b=b)
        np.testing.assert_allclose(res.x, np.ones(3), atol=1e-8)

    def test_deterministic(self):
        rng = np.random.default_rng(137)
        M = rng.normal(size=(8, 8))
        P = M @ M.T + 8 * np.eye(8)
        q = rng.normal(size=8)
        G = rng.normal(size=(6, 8))
        h = rng.uniform(0.5, 1.5, size=6)
        a = qp_solve(P, q, G, h)
        b = qp_solve(P, q, G, h)
        assert np.array_equal(a.x, b.x)
        assert a.iterations == b.iterations

    def test_iteration_cap_reported(self):
        rng = np.random.default_rng(139)
        M = rng.normal(size=(12, 12))
        P = M @ M.T + 1e-6 * np.eye(12)
        q = rng.normal(size=12)
        G = np.vstack([np.eye(12), -np.eye(12)])
        h = np.full(24, 1.0)
        res = qp_solve(P, q, G, h, max_iter=1)
        assert res.status in ("max_iter", "inaccurate", "optimal")
        assert res.iterations <= 1

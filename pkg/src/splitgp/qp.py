"""Dense convex-QP solving contract used by the controllers.

    minimize    1/2 x^T P x + q^T x
    subject to  G x <= h,  A x = b

Backed by cvxopt's interior-point solver behind a thin deterministic wrapper
that adds Hessian regularization, computes a scaled KKT residual for the
returned point, and maps solver states onto a small status vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

from .errors import SolverFailure

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INACCURATE = "inaccurate"

KKT_TOL = 1e-6


@dataclass
class QpResult:
    x: np.ndarray
    status: str
    iterations: int
    kkt_residual: float
    z: np.ndarray | None = None  # inequality multipliers
    y: np.ndarray | None = None  # equality multipliers


def kkt_residual(P, q, x, G=None, h=None, A=None, b=None, z=None, y=None) -> float:
    """Scaled max of stationarity, primal feasibility, and complementarity."""
    scale = 1.0 + float(np.max(np.abs(q))) if q.size else 1.0
    grad = P @ x + q
    if G is not None and z is not None:
        grad = grad + G.T @ z
    if A is not None and y is not None:
        grad = grad + A.T @ y
    res = float(np.max(np.abs(grad))) / scale
    if G is not None:
        viol = G @ x - h
        res = max(res, float(np.max(viol, initial=0.0)) / (1.0 + float(np.max(np.abs(h), initial=0.0))))
        if z is not None:
            comp = float(np.max(np.abs(z * viol), initial=0.0))
            res = max(res, comp / (1.0 + abs(float(x @ (P @ x)) / 2 + float(q @ x))))
    if A is not None:
        res = max(res, float(np.max(np.abs(A @ x - b), initial=0.0))
                  / (1.0 + float(np.max(np.abs(b), initial=0.0))))
    return res


def qp_solve(P, q, G=None, h=None, A=None, b=None,
             reg: float = 1e-9, max_iter: int = 60) -> QpResult:
    """Solve one dense convex QP deterministically.

    Raises SolverFailure when the backend cannot produce any iterate; an
    iterate that converged short of full accuracy is returned with a
    non-optimal status so the caller can decide.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    n = q.shape[0]
    P_reg = 0.5 * (P + P.T) + reg * np.eye(n)

    args = [cvx_matrix(P_reg), cvx_matrix(q)]
    if G is not None:
        args += [cvx_matrix(np.asarray(G, dtype=float)),
                 cvx_matrix(np.asarray(h, dtype=float).ravel())]
    else:
        args += [None, None]
    if A is not None:
        args += [cvx_matrix(np.asarray(A, dtype=float)),
                 cvx_matrix(np.asarray(b, dtype=float).ravel())]

    options = {"show_progress": False, "maxiters": int(max_iter),
               "abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8}
    try:
        sol = cvx_solvers.qp(*args, options=options)
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        raise SolverFailure(f"qp backend failed: {exc}") from exc
    if sol["x"] is None:
        raise SolverFailure(f"qp backend returned no iterate (status {sol['status']})")

    x = np.asarray(sol["x"]).ravel()
    z = np.asarray(sol["z"]).ravel() if G is not None else None
    y = np.asarray(sol["y"]).ravel() if A is not None else None
    res = kkt_residual(P_reg, q, x,
                       None if G is None else np.asarray(G, dtype=float),
                       None if G is None else np.asarray(h, dtype=float).ravel(),
                       None if A is None else np.asarray(A, dtype=float),
                       None if A is None else np.asarray(b, dtype=float).ravel(),
                       z, y)
    iterations = int(sol.get("iterations", 0))
    if sol["status"] == "optimal" or res < KKT_TOL:
        status = STATUS_OPTIMAL
    elif iterations >= max_iter:
        status = STATUS_MAX_ITER
    else:
        status = STATUS_INACCURATE
    return QpResult(x=x, status=status, iterations=iterations,
                    kkt_residual=res, z=z, y=y)

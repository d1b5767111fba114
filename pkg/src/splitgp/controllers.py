"""Reference-tracking MPC and progress-maximizing contouring MPC (MPCC).

Both controllers run a short SQP loop per control step: the hybrid model
(nominal discrete map plus the learned residual, frozen along the previous
predicted trajectory) is linearized about the current iterate, condensed onto
the input sequence, and solved as one dense QP. Valid-region and track-tube
limits enter the MPCC QP as soft constraints with one shared slack per
constraint family; input-rate and actuator-range limits are hard since they
are exactly linear in the decision variables.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverFailure
from .qp import STATUS_OPTIMAL, qp_solve
from .region import RegionSpec
from .track import TrackModel
from .vehicle import (
    B_D,
    IDELTA,
    IT,
    IVX,
    IX,
    IY,
    N_INPUTS,
    N_STATES,
    TireParams,
    VehicleParams,
    discretize_array,
    features_array,
    linearize_batch,
    longitudinal_forces,
    magic_formula,
    slip_angles_array,
)


@dataclass
class SolverStats:
    status: str = STATUS_OPTIMAL
    kkt_residual: float = 0.0
    qp_iterations: int = 0
    sqp_iterations: int = 0
    solve_time_s: float = 0.0
    degraded: bool = False
    max_slack: float = 0.0


@dataclass
class StepResult:
    u0: np.ndarray                 # first input (dT, ddelta)
    X_pred: np.ndarray             # predicted states (H+1, 8)
    U_plan: np.ndarray             # planned inputs (H, m)
    stats: SolverStats
    v0: float | None = None        # progress rate (MPCC only)
    residual_mean: np.ndarray | None = None  # g along the horizon (H, 3)
    residual_var: np.ndarray | None = None


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 30
    dt: float = 0.05
    Q: tuple = (0.0, 0.0, 10.0, 1.0, 1.0, 1.0, 0.0, 0.0)
    R: tuple = (1e-6, 5.0)
    P: tuple = (0.0, 0.0, 10.0, 1.0, 1.0, 1.0, 0.0, 0.0)
    dT_max: float = 5000.0    # N*m/s
    ddelta_max: float = 1.0   # rad/s
    T_max: float = 1000.0
    delta_max: float = 0.35
    v_x_min_soft: float = 1.0
    slack_linear: float = 1e4
    slack_quad: float = 1e4
    sqp_iters: int = 2
    qp_reg: float = 1e-9
    qp_max_iter: int = 60

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        if np.any(np.asarray(self.Q) < 0) or np.any(np.asarray(self.P) < 0):
            raise ValueError("Q and P must be >= 0")
        if np.any(np.asarray(self.R) <= 0):
            raise ValueError("R must be > 0")


@dataclass(frozen=True)
class MpccConfig:
    horizon: int = 30
    dt: float = 0.05
    q_l: float = 100.0
    q_c: float = 50.0
    q_v: float = 0.5
    R_u: tuple = (1e-4, 10.0)
    v_reg: float = 1e-4
    v_progress_max: float = 40.0
    tube_radius: float | None = None  # None: use the track's tube radius
    alpha_max: float = 0.18
    dalpha_max: float = 0.10
    p_long: float = 0.9
    p_ellipse: float = 0.95
    dT_max: float = 5000.0
    ddelta_max: float = 1.0
    T_max: float = 1000.0
    delta_max: float = 0.35
    v_x_min_soft: float = 1.0
    slack_linear: float = 2e3
    slack_quad: float = 2e3
    sqp_iters: int = 2
    qp_reg: float = 1e-9
    qp_max_iter: int = 60

    def __post_init__(self):
        if self.q_l <= 0 or self.q_c <= 0 or self.q_v <= 0:
            raise ValueError("q_l, q_c, q_v must be > 0")
        if np.any(np.asarray(self.R_u) <= 0):
            raise ValueError("R_u must be > 0")


def condense(A, B, c, x0):
    """Stack x_{k+1} = A_k x_k + B_k u_k + c_k into X = Phi x0 + Gamma U + omega.

    A: (H, n, n), B: (H, n, m), c: (H, n). Returned shapes: Phi (H, n, n),
    Gamma (H*n, H*m), omega (H*n,); X stacks x_1..x_H.
    """
    H, n, m = B.shape
    Phi = np.empty((H, n, n))
    omega = np.empty((H, n))
    Gamma = np.zeros((H, n, H, m))
    Phi[0] = A[0]
    omega[0] = c[0]
    Gamma[0, :, 0] = B[0]
    for k in range(1, H):
        Phi[k] = A[k] @ Phi[k - 1]
        omega[k] = A[k] @ omega[k - 1] + c[k]
        Gamma[k, :, : k] = np.einsum("ij,jkm->ikm", A[k], Gamma[k - 1, :, : k])
        Gamma[k, :, k] = B[k]
    base = Phi @ x0 + omega  # (H, n): predicted states for U = 0
    return base.reshape(H * n), Gamma.reshape(H * n, H * m)


def hybrid_rollout(x0, U, dt, params, tires, g):
    """Roll the hybrid model: x_{k+1} = f(x_k, u_k) + B_d g_k (g frozen)."""
    H = U.shape[0]
    X = np.empty((H + 1, N_STATES))
    X[0] = x0
    for k in range(H):
        X[k + 1] = discretize_array(X[k], U[k], dt, params, tires) + B_D @ g[k]
    return X


def shift_warm_start(U: np.ndarray) -> np.ndarray:
    """Standard one-stage shift; the last stage is repeated."""
    return np.vstack([U[1:], U[-1]])


class _ResidualCache:
    """Evaluates the residual along the previous trajectory, once per SQP iterate."""

    def __init__(self, residual_fn, t_max: float):
        self.residual_fn = residual_fn
        self.t_max = t_max
        self.mean = None
        self.var = None

    def evaluate(self, X_prev, params) -> np.ndarray:
        H = X_prev.shape[0]
        if self.residual_fn is None:
            self.mean = np.zeros((H, 3))
            self.var = np.zeros((H, 3))
        else:
            Z = features_array(X_prev, params, self.t_max)
            self.mean, self.var = self.residual_fn(Z)
        return self.mean


def _input_box_rows(H, m, bounds):
    """Hard box |u_j| <= bound_j as G rows over the stacked input vector."""
    nu = H * m
    eye = np.eye(nu)
    ub = np.tile(bounds, H)
    G = np.vstack([eye, -eye])
    h = np.concatenate([ub, ub])
    return G, h


def _actuator_rows(base, Gamma, H, n, row_idx, bound):
    """Hard rows |x[row_idx]| <= bound for every stage (exactly linear rows)."""
    rows = [k * n + row_idx for k in range(H)]
    Gx = Gamma[rows]
    bx = base[rows]
    G = np.vstack([Gx, -Gx])
    h = np.concatenate([bound - bx, bound + bx])
    return G, h


class MpcController:
    """Tracks a state/input reference with the hybrid model."""

    def __init__(self, cfg: MpcConfig, params: VehicleParams, tires: TireParams,
                 t_max: float = 1000.0):
        self.cfg = cfg
        self.params = params
        self.tires = tires
        self.t_max = t_max
        self._warm_U: np.ndarray | None = None
        self._prev_X: np.ndarray | None = None

    def reset(self):
        self._warm_U = None
        self._prev_X = None

    def step(self, x, X_ref, U_ref=None, residual_fn=None) -> StepResult:
        """One control step.

        X_ref: (H, 8) reference for stages 1..H. U_ref: (H, 2) or None.
        residual_fn maps features (n, 3) to (mean, var) arrays of shape (n, 3).
        """
        t_start = time.perf_counter()
        cfg = self.cfg
        H, n, m = cfg.horizon, N_STATES, N_INPUTS
        x = np.asarray(x, dtype=float)
        X_ref = np.asarray(X_ref, dtype=float)
        if X_ref.shape[0] < H:
            raise ValueError(f"reference must cover the horizon ({H} stages)")
        X_ref = X_ref[:H]
        U_ref = np.zeros((H, m)) if U_ref is None else np.asarray(U_ref, dtype=float)[:H]

        U = self._warm_U if self._warm_U is not None else U_ref.copy()
        cache = _ResidualCache(residual_fn, self.t_max)

        q_diag = np.concatenate([np.tile(cfg.Q, H - 1), np.asarray(cfg.Q) + np.asarray(cfg.P)])
        r_diag = np.tile(cfg.R, H)
        u_bounds = np.array([cfg.dT_max, cfg.ddelta_max])

        stats = SolverStats()
        X = None
        try:
            # residuals are frozen along the previous predicted trajectory
            X_res_src = (self._prev_X if self._prev_X is not None
                         else hybrid_rollout(x, U, cfg.dt, self.params, self.tires,
                                             np.zeros((H, 3))))
            for it in range(cfg.sqp_iters):
                g = cache.evaluate(X_res_src[:H], self.params)
                X = hybrid_rollout(x, U, cfg.dt, self.params, self.tires, g)
                X_res_src = X
                A, B = linearize_batch(X[:H], U, cfg.dt, self.params, self.tires)
                c = X[1:] - np.einsum("kij,kj->ki", A, X[:H]) - np.einsum("kij,kj->ki", B, U)
                base, Gamma = condense(A, B, c, x)

                # cost over w = [U, s_v]
                nu = H * m
                err0 = base - X_ref.reshape(-1)
                P_qp = np.zeros((nu + 1, nu + 1))
                P_qp[:nu, :nu] = Gamma.T @ (q_diag[:, None] * Gamma)
                P_qp[np.arange(nu), np.arange(nu)] += r_diag
                P_qp[nu, nu] = cfg.slack_quad
                q_qp = np.zeros(nu + 1)
                q_qp[:nu] = Gamma.T @ (q_diag * err0) - r_diag * U_ref.reshape(-1)
                q_qp[nu] = cfg.slack_linear

                Gu, hu = _input_box_rows(H, m, u_bounds)
                Gt, ht = _actuator_rows(base, Gamma, H, n, IT, cfg.T_max)
                Gd, hd = _actuator_rows(base, Gamma, H, n, IDELTA, cfg.delta_max)
                # soft v_x lower bound with one shared slack
                vx_rows = [k * n + IVX for k in range(H)]
                Gv = -Gamma[vx_rows]
                hv = base[vx_rows] - cfg.v_x_min_soft
                blocks = [(Gu, hu), (Gt, ht), (Gd, hd)]
                G_list, h_list = [], []
                for Gb, hb in blocks:
                    Gb_full = np.zeros((Gb.shape[0], nu + 1))
                    Gb_full[:, :nu] = Gb
                    G_list.append(Gb_full)
                    h_list.append(hb)
                Gv_full = np.zeros((H, nu + 1))
                Gv_full[:, :nu] = Gv
                Gv_full[:, nu] = -1.0
                G_list.append(Gv_full)
                h_list.append(hv)
                s_pos = np.zeros((1, nu + 1))
                s_pos[0, nu] = -1.0
                G_list.append(s_pos)
                h_list.append(np.zeros(1))
                G = np.vstack(G_list)
                h = np.concatenate(h_list)

                res = qp_solve(P_qp, q_qp, G, h, reg=cfg.qp_reg, max_iter=cfg.qp_max_iter)
                U = res.x[:nu].reshape(H, m)
                U = np.clip(U, -u_bounds, u_bounds)
                stats.status = res.status
                stats.kkt_residual = res.kkt_residual
                stats.qp_iterations = res.iterations
                stats.max_slack = float(res.x[nu])
                stats.sqp_iterations = it + 1
            X = hybrid_rollout(x, U, cfg.dt, self.params, self.tires, cache.mean)
        except (SolverFailure, DomainError):
            stats.degraded = True
            if self._warm_U is None:
                U = np.zeros((H, m))
            else:
                U = self._warm_U
            try:
                X = hybrid_rollout(x, U, cfg.dt, self.params, self.tires, np.zeros((H, 3)))
            except DomainError:
                X = np.tile(x, (H + 1, 1))

        self._warm_U = shift_warm_start(U)
        self._prev_X = np.vstack([X[1:], X[-1]])
        stats.solve_time_s = time.perf_counter() - t_start
        return StepResult(u0=U[0].copy(), X_pred=X, U_plan=U, stats=stats,
                          residual_mean=cache.mean, residual_var=cache.var)


def make_reference(track: TrackModel, s0: float, v_ref: float, H: int, dt: float,
                   phi_vehicle: float, params: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Constant-speed centerline reference for the tracking MPC.

    Returns (X_ref (H, 8), U_ref (H, 2)) for stages 1..H. The reference
    heading is unwrapped onto the branch of the vehicle's current yaw angle.
    """
    s = s0 + v_ref * dt * np.arange(1, H + 1)
    pos = track.position(s)
    phi = np.unwrap(track.heading(s))
    phi += 2 * np.pi * np.round((phi_vehicle - phi[0]) / (2 * np.pi))
    r_ref = track.heading_rate(s) * v_ref
    # steady-state torque against drag and rolling resistance
    T_ss = params.r_e * (params.C_w * v_ref**2 + params.C_fr + params.C_rr)
    X_ref = np.zeros((H, N_STATES))
    X_ref[:, IX] = pos[:, 0]
    X_ref[:, IY] = pos[:, 1]
    X_ref[:, 2] = phi
    X_ref[:, IVX] = v_ref
    X_ref[:, 5] = r_ref
    X_ref[:, IT] = T_ss
    return X_ref, np.zeros((H, N_INPUTS))


def _constraint_terms(X, params, tires, cfg):
    """Values and state gradients of the valid-region constraint scalars.

    For stages X (H, 8) returns values (H, 4) and gradients (H, 4, 8) of
    (alpha_f, alpha_r, ellipse_front, ellipse_rear) by batched central
    differences; the ellipse scalars are normalized by D^2 so their magnitude
    is comparable to the slip terms.
    """

    def scalars(Xs):
        af, ar = slip_angles_array(Xs, params)
        F_fy = magic_formula(af, tires.B_f, tires.C_f, tires.D_f)
        F_ry = magic_formula(ar, tires.B_r, tires.C_r, tires.D_r)
        F_fx, F_rx = longitudinal_forces(Xs[..., IT], params)
        ef = ((cfg.p_long * F_fx) ** 2 + F_fy**2) / tires.D_f**2
        er = ((cfg.p_long * F_rx) ** 2 + F_ry**2) / tires.D_r**2
        return np.stack([af, ar, ef, er], axis=-1)

    H = X.shape[0]
    vals = scalars(X)
    h_steps = 1e-5 * np.maximum(1.0, np.abs(X))
    Xp = np.repeat(X[:, None, :], 2 * N_STATES, axis=1)
    for i in range(N_STATES):
        Xp[:, 2 * i, i] += h_steps[:, i]
        Xp[:, 2 * i + 1, i] -= h_steps[:, i]
    F = scalars(Xp.reshape(-1, N_STATES)).reshape(H, 2 * N_STATES, 4)
    grads = np.empty((H, 4, N_STATES))
    for i in range(N_STATES):
        grads[:, :, i] = (F[:, 2 * i] - F[:, 2 * i + 1]) / (2.0 * h_steps[:, i, None])
    return vals, grads


class MpccController:
    """Maximizes track progress subject to tube and valid-region limits."""

    N_SLACKS = 7  # tube, ellipse f/r, slip f/r, slip difference, v_x floor

    def __init__(self, cfg: MpccConfig, params: VehicleParams, tires: TireParams,
                 track: TrackModel, t_max: float = 1000.0):
        self.cfg = cfg
        self.params = params
        self.tires = tires
        self.track = track
        self.t_max = t_max
        self.tube = cfg.tube_radius if cfg.tube_radius is not None else track.tube_radius
        self._warm_U: np.ndarray | None = None  # (H, 3): dT, ddelta, v
        self._prev_X: np.ndarray | None = None

    def reset(self):
        self._warm_U = None
        self._prev_X = None

    def step(self, x, theta0: float, residual_fn=None) -> StepResult:
        t_start = time.perf_counter()
        cfg = self.cfg
        H = cfg.horizon
        n_aug = N_STATES + 1
        m_aug = N_INPUTS + 1
        x = np.asarray(x, dtype=float)

        if self._warm_U is None:
            U = np.zeros((H, m_aug))
            U[:, 2] = max(x[IVX], 1.0)
        else:
            U = shift_warm_start(self._warm_U)

        cache = _ResidualCache(residual_fn, self.t_max)
        stats = SolverStats()
        Xi = None

        try:
            X_res_src = (self._prev_X if self._prev_X is not None
                         else self._rollout_aug(x, theta0, U, np.zeros((H, 3)))[:, :N_STATES])
            for it in range(cfg.sqp_iters):
                g = cache.evaluate(X_res_src[:H], self.params)
                Xi = self._rollout_aug(x, theta0, U, g)
                X_res_src = Xi[:, :N_STATES]
                U, stats = self._solve_qp(x, theta0, Xi, U, g, stats)
                stats.sqp_iterations = it + 1
            Xi = self._rollout_aug(x, theta0, U, cache.mean)
        except (SolverFailure, DomainError):
            stats.degraded = True
            if self._warm_U is not None:
                U = shift_warm_start(self._warm_U)
            else:
                U = np.zeros((H, m_aug))
                U[:, 2] = max(x[IVX], 1.0)
            try:
                Xi = self._rollout_aug(x, theta0, U, np.zeros((H, 3)))
            except DomainError:
                Xi = np.tile(np.concatenate([x, [theta0]]), (H + 1, 1))

        self._warm_U = U
        self._prev_X = np.vstack([Xi[1:, :N_STATES], Xi[-1:, :N_STATES]])
        stats.solve_time_s = time.perf_counter() - t_start
        return StepResult(u0=U[0, :2].copy(), X_pred=Xi[:, :N_STATES], U_plan=U,
                          stats=stats, v0=float(U[0, 2]),
                          residual_mean=cache.mean, residual_var=cache.var)

    def _rollout_aug(self, x, theta0, U, g):
        H = U.shape[0]
        Xi = np.empty((H + 1, N_STATES + 1))
        Xi[0, :N_STATES] = x
        Xi[0, N_STATES] = theta0
        for k in range(H):
            Xi[k + 1, :N_STATES] = (discretize_array(Xi[k, :N_STATES], U[k, :2],
                                                     self.cfg.dt, self.params, self.tires)
                                    + B_D @ g[k])
            Xi[k + 1, N_STATES] = Xi[k, N_STATES] + U[k, 2] * self.cfg.dt
        return Xi

    def _solve_qp(self, x, theta0, Xi, U, g, stats: SolverStats):
        cfg = self.cfg
        H = cfg.horizon
        n = N_STATES + 1
        m = N_INPUTS + 1
        X_stages = Xi[1:, :N_STATES]           # (H, 8)
        theta_stages = Xi[1:, N_STATES]        # (H,)

        A8, B8 = linearize_batch(Xi[:H, :N_STATES], U[:, :2],
                                 cfg.dt, self.params, self.tires)
        A = np.zeros((H, n, n))
        B = np.zeros((H, n, m))
        A[:, :N_STATES, :N_STATES] = A8
        A[:, N_STATES, N_STATES] = 1.0
        B[:, :N_STATES, :N_INPUTS] = B8
        B[:, N_STATES, 2] = cfg.dt
        c = Xi[1:] - np.einsum("kij,kj->ki", A, Xi[:H]) - np.einsum("kij,kj->ki", B, U)
        xi0 = np.concatenate([x, [theta0]])
        base, Gamma = condense(A, B, c, xi0)

        # contouring cost, linearized about the current stage trajectory
        pos_c = self.track.position(theta_stages)
        phi_c = self.track.heading(theta_stages)
        dphi = self.track.heading_rate(theta_stages)
        dx = X_stages[:, IX] - pos_c[:, 0]
        dy = X_stages[:, IY] - pos_c[:, 1]
        cos_p, sin_p = np.cos(phi_c), np.sin(phi_c)
        e_l = -cos_p * dx - sin_p * dy
        e_c = sin_p * dx - cos_p * dy
        # rows of d(e_l, e_c)/d(X, Y, theta)
        J = np.zeros((H, 2, 3))
        J[:, 0, 0] = -cos_p
        J[:, 0, 1] = -sin_p
        J[:, 0, 2] = dphi * e_c + 1.0
        J[:, 1, 0] = sin_p
        J[:, 1, 1] = -cos_p
        J[:, 1, 2] = -dphi * e_l

        nu = H * m
        n_s = self.N_SLACKS
        nw = nu + n_s
        W = np.array([cfg.q_l, cfg.q_c])
        sel = [IX, IY, N_STATES]  # columns of the augmented state entering e
        P_x = np.zeros((H * n, H * n))
        q_x = np.zeros(H * n)
        e0 = np.stack([e_l, e_c], axis=1)  # (H, 2)
        for k in range(H):
            Jk = J[k]
            cols = [k * n + j for j in sel]
            P_x[np.ix_(cols, cols)] += 2.0 * Jk.T @ (W[:, None] * Jk)
            q_x[cols] += 2.0 * Jk.T @ (W * (e0[k] - Jk @ Xi[k + 1][sel]))

        P_qp = np.zeros((nw, nw))
        P_qp[:nu, :nu] = Gamma.T @ P_x @ Gamma
        q_qp = np.zeros(nw)
        q_qp[:nu] = Gamma.T @ (P_x @ base + q_x)
        # input regularization and progress reward
        r_diag = np.tile([cfg.R_u[0], cfg.R_u[1], cfg.v_reg], H)
        P_qp[np.arange(nu), np.arange(nu)] += 2.0 * r_diag
        q_qp[np.arange(2, nu, m)] -= cfg.q_v
        # slack penalties
        sl = np.arange(nu, nw)
        P_qp[sl, sl] = 2.0 * cfg.slack_quad
        q_qp[sl] = cfg.slack_linear

        G_list, h_list = [], []

        def add_rows(Gx, hx, slack_idx=None):
            Gfull = np.zeros((Gx.shape[0], nw))
            Gfull[:, :nu] = Gx
            if slack_idx is not None:
                Gfull[:, nu + slack_idx] = -1.0
            G_list.append(Gfull)
            h_list.append(hx)

        # hard input box on (dT, ddelta) and progress rate v in [0, v_max]
        eye = np.eye(nu)
        rate_rows = np.array([k * m + j for k in range(H) for j in range(2)])
        v_rows = np.arange(2, nu, m)
        add_rows(eye[rate_rows], np.tile(u_bounds_from(cfg), H))
        add_rows(-eye[rate_rows], np.tile(u_bounds_from(cfg), H))
        add_rows(eye[v_rows], np.full(H, cfg.v_progress_max))
        add_rows(-eye[v_rows], np.zeros(H))

        # hard actuator-range rows (exactly linear states)
        for row_idx, bound in ((IT, cfg.T_max), (IDELTA, cfg.delta_max)):
            rows = [k * n + row_idx for k in range(H)]
            Gx = Gamma[rows]
            bx = base[rows]
            add_rows(Gx, bound - bx)
            add_rows(-Gx, bound + bx)

        # soft tube on the linearized contour error: |e_c| <= tube (slack 0)
        Jc_rows = np.zeros((H, H * n))
        ec_const = np.empty(H)
        for k in range(H):
            cols = [k * n + j for j in sel]
            Jc_rows[k, cols] = J[k, 1]
            ec_const[k] = e0[k][1] - J[k, 1] @ Xi[k + 1][sel]
        Gc = Jc_rows @ Gamma
        cc = Jc_rows @ base + ec_const
        add_rows(Gc, self.tube - cc, slack_idx=0)
        add_rows(-Gc, self.tube + cc, slack_idx=0)

        # soft valid-region rows (slacks 1..5)
        vals, grads = _constraint_terms(X_stages, self.params, self.tires, cfg)
        ell_bound_f = cfg.p_ellipse**2
        ell_bound_r = cfg.p_ellipse**2
        specs = [
            (grads[:, 2], vals[:, 2], ell_bound_f, 1, False),   # ellipse front
            (grads[:, 3], vals[:, 3], ell_bound_r, 2, False),   # ellipse rear
            (grads[:, 0], vals[:, 0], cfg.alpha_max, 3, True),  # slip front
            (grads[:, 1], vals[:, 1], cfg.alpha_max, 4, True),  # slip rear
            (grads[:, 0] - grads[:, 1], vals[:, 0] - vals[:, 1],
             cfg.dalpha_max, 5, True),                          # slip difference
        ]
        for grad, val, bound, sidx, symmetric in specs:
            Gx = np.zeros((H, H * n))
            for k in range(H):
                Gx[k, k * n: k * n + N_STATES] = grad[k]
            const = val - np.einsum("kj,kj->k", grad, X_stages)
            Gu = Gx @ Gamma
            cu = Gx @ base + const
            add_rows(Gu, bound - cu, slack_idx=sidx)
            if symmetric:
                add_rows(-Gu, bound + cu, slack_idx=sidx)

        # soft v_x floor (slack 6)
        vx_rows = [k * n + IVX for k in range(H)]
        add_rows(-Gamma[vx_rows], base[vx_rows] - cfg.v_x_min_soft, slack_idx=6)

        # slacks nonnegative
        Gs = np.zeros((n_s, nw))
        Gs[np.arange(n_s), nu + np.arange(n_s)] = -1.0
        G_list.append(Gs)
        h_list.append(np.zeros(n_s))

        G = np.vstack(G_list)
        h = np.concatenate(h_list)

        res = qp_solve(0.5 * (P_qp + P_qp.T), q_qp, G, h,
                       reg=cfg.qp_reg, max_iter=cfg.qp_max_iter)
        U_new = res.x[:nu].reshape(H, m)
        U_new[:, :2] = np.clip(U_new[:, :2], -u_bounds_from(cfg), u_bounds_from(cfg))
        U_new[:, 2] = np.clip(U_new[:, 2], 0.0, cfg.v_progress_max)
        stats.status = res.status
        stats.kkt_residual = res.kkt_residual
        stats.qp_iterations = res.iterations
        stats.max_slack = float(np.max(res.x[nu:nw], initial=0.0))
        return U_new, stats


def u_bounds_from(cfg) -> np.ndarray:
    return np.array([cfg.dT_max, cfg.ddelta_max])

"""Nominal single-track vehicle model.

Continuous dynamics with a simplified Magic Formula tire, fixed-step RK4
discretization, finite-difference linearization, and extraction of the
velocity-state residual labels used by the online learner.

State layout: [X, Y, phi, v_x, v_y, r, T, delta]
    X, Y   global position (m)
    phi    yaw angle (rad)
    v_x    longitudinal velocity (m/s), must stay >= v_min
    v_y    lateral velocity (m/s)
    r      yaw rate (rad/s)
    T      command torque (N*m), integrator state driven by the torque rate
    delta  steering angle (rad), driven by the steering rate
Input layout: [dT, ddelta]  (N*m/s, rad/s)

All array functions broadcast over leading axes, so a whole batch of states
can be stepped or differentiated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

GRAVITY = 9.81  # m/s^2, used for static axle loads

# state / input indices
IX, IY, IPHI, IVX, IVY, IR, IT, IDELTA = range(8)
N_STATES = 8
N_INPUTS = 2

# rows of the state affected by the residual model: (v_x, v_y, r)
VELOCITY_ROWS = (IVX, IVY, IR)

# selector mapping 3-dim residuals into the 8-dim state, and its pseudo-inverse
B_D = np.zeros((N_STATES, 3))
B_D[IVX, 0] = B_D[IVY, 1] = B_D[IR, 2] = 1.0
B_D_PINV = B_D.T.copy()

DEFAULT_V_MIN = 0.5  # m/s, guard below which slip angles are undefined


@dataclass(frozen=True)
class VehicleParams:
    """Chassis parameters treated as accurately calibrated and constant."""

    m: float = 1500.0    # mass (kg)
    I_z: float = 2250.0  # yaw inertia (kg*m^2)
    l_f: float = 1.2     # CG to front axle (m)
    l_r: float = 1.4     # CG to rear axle (m)
    C_w: float = 0.8     # air drag coefficient (N*s^2/m^2)
    kappa: float = 0.5   # front torque split, in [0, 1]
    r_e: float = 0.3     # tire rolling radius (m)
    C_fr: float = 50.0   # front rolling resistance (N)
    C_rr: float = 50.0   # rear rolling resistance (N)

    def __post_init__(self):
        for name in ("m", "I_z", "l_f", "l_r", "C_w", "r_e", "C_fr", "C_rr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"VehicleParams.{name} must be > 0")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("VehicleParams.kappa must lie in [0, 1]")

    @property
    def F_fz(self) -> float:
        """Static front axle load (N)."""
        return self.m * GRAVITY * self.l_r / (self.l_f + self.l_r)

    @property
    def F_rz(self) -> float:
        """Static rear axle load (N)."""
        return self.m * GRAVITY * self.l_f / (self.l_f + self.l_r)


@dataclass(frozen=True)
class TireParams:
    """Simplified Magic Formula coefficients per axle (D in N)."""

    B_f: float = 8.0
    C_f: float = 1.3
    D_f: float = 8000.0
    B_r: float = 8.5
    C_r: float = 1.25
    D_r: float = 7200.0

    def __post_init__(self):
        for name in ("B_f", "C_f", "D_f", "B_r", "C_r", "D_r"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TireParams.{name} must be > 0")


@dataclass(frozen=True)
class VehicleState:
    X: float = 0.0
    Y: float = 0.0
    phi: float = 0.0
    v_x: float = 1.0
    v_y: float = 0.0
    r: float = 0.0
    T: float = 0.0
    delta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.X, self.Y, self.phi, self.v_x, self.v_y, self.r, self.T, self.delta]
        )

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class ControlInput:
    dT: float = 0.0      # torque rate (N*m/s)
    ddelta: float = 0.0  # steering rate (rad/s)

    def as_array(self) -> np.ndarray:
        return np.array([self.dT, self.ddelta])

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return cls(float(u[0]), float(u[1]))


def magic_formula(alpha, B, C, D):
    """Lateral force D*sin(C*arctan(B*alpha)); odd in alpha."""
    return D * np.sin(C * np.arctan(B * alpha))


def tire_lateral_force(alpha, axle: str, tires: TireParams):
    """Lateral force of one axle at slip angle ``alpha`` (rad)."""
    if axle == "front":
        return magic_formula(alpha, tires.B_f, tires.C_f, tires.D_f)
    if axle == "rear":
        return magic_formula(alpha, tires.B_r, tires.C_r, tires.D_r)
    raise ValueError(f"axle must be 'front' or 'rear', got {axle!r}")


def slip_angles_array(x, params: VehicleParams, v_min: float = DEFAULT_V_MIN):
    """Front/rear slip angles for states ``x`` of shape (..., 8)."""
    x = np.asarray(x, dtype=float)
    v_x = x[..., IVX]
    if np.any(v_x < v_min):
        raise DomainError(
            f"slip angles undefined: v_x={np.min(v_x):.3f} m/s below guard {v_min} m/s"
        )
    v_y = x[..., IVY]
    r = x[..., IR]
    delta = x[..., IDELTA]
    alpha_f = np.arctan((v_y + params.l_f * r) / v_x) - delta
    alpha_r = np.arctan((-v_y + params.l_r * r) / v_x)
    return alpha_f, alpha_r


def slip_angles(state: VehicleState, params: VehicleParams, v_min: float = DEFAULT_V_MIN):
    """Front/rear slip angles (rad) of a single state."""
    alpha_f, alpha_r = slip_angles_array(state.as_array(), params, v_min)
    return float(alpha_f), float(alpha_r)


def longitudinal_forces(T, params: VehicleParams):
    """Front/rear longitudinal tire forces (N) from the command torque."""
    F_fx = params.kappa * T / params.r_e - params.C_fr
    F_rx = (1.0 - params.kappa) * T / params.r_e - params.C_rr
    return F_fx, F_rx


def compose_derivative(x, u, F_fx, F_rx, F_fy, F_ry, params: VehicleParams):
    """Assemble the state derivative from tire forces.

    Shared by the nominal model and the perturbed plant so that a plant with
    identity perturbation reproduces the nominal model bit for bit.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    phi = x[..., IPHI]
    v_x = x[..., IVX]
    v_y = x[..., IVY]
    r = x[..., IR]
    delta = x[..., IDELTA]

    F_d = params.C_w * v_x**2
    cos_d = np.cos(delta)
    sin_d = np.sin(delta)

    xdot = np.empty(np.broadcast(x[..., 0], u[..., 0]).shape + (N_STATES,))
    xdot[..., IX] = v_x * np.cos(phi) - v_y * np.sin(phi)
    xdot[..., IY] = v_x * np.sin(phi) + v_y * np.cos(phi)
    xdot[..., IPHI] = r
    xdot[..., IVX] = (F_rx - F_d - F_fy * sin_d + F_fx * cos_d) / params.m + v_y * r
    xdot[..., IVY] = (F_ry + F_fy * cos_d + F_fx * sin_d) / params.m - v_x * r
    xdot[..., IR] = ((F_fy * cos_d + F_fx * sin_d) * params.l_f - F_ry * params.l_r) / params.I_z
    xdot[..., IT] = u[..., 0]
    xdot[..., IDELTA] = u[..., 1]
    return xdot


def dynamics(x, u, params: VehicleParams, tires: TireParams, v_min: float = DEFAULT_V_MIN):
    """Continuous-time state derivative of the nominal model, shape (..., 8)."""
    x = np.asarray(x, dtype=float)
    alpha_f, alpha_r = slip_angles_array(x, params, v_min)
    F_fy = magic_formula(alpha_f, tires.B_f, tires.C_f, tires.D_f)
    F_ry = magic_formula(alpha_r, tires.B_r, tires.C_r, tires.D_r)
    F_fx, F_rx = longitudinal_forces(x[..., IT], params)
    return compose_derivative(x, u, F_fx, F_rx, F_fy, F_ry, params)


def continuous_dynamics(state: VehicleState, inp: ControlInput,
                        params: VehicleParams, tires: TireParams) -> np.ndarray:
    """State derivative of a single state as an 8-vector."""
    return dynamics(state.as_array(), inp.as_array(), params, tires)


RK4_SUBSTEPS = 4  # internal substeps per controller interval; keeps the local
                  # truncation error well below the residual signal at 50 ms


def rk4_step(f, x, u, dt: float, substeps: int = 1):
    """Fixed-step RK4 integration of ``xdot = f(x, u)`` with zero-order-hold input."""
    h = dt / substeps
    for _ in range(substeps):
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def make_scalar_dynamics(params: VehicleParams, tires: TireParams,
                         v_min: float = DEFAULT_V_MIN,
                         tire_scales=(1.0, 1.0, 1.0), torque_gain: float = 1.0,
                         coupling_on: bool = False):
    """Build a plain-float dynamics closure over tuple states.

    The closure evaluates exactly the same formulas as the vectorized
    `dynamics` (or the perturbed plant dynamics when scales are given) with
    all constants bound once. Identity scales reproduce the nominal model's
    arithmetic bit for bit, which is what makes the plant degenerate exactly
    to the nominal model under the identity perturbation.
    """
    m, I_z = params.m, params.I_z
    l_f, l_r = params.l_f, params.l_r
    C_w, kap, r_e = params.C_w, params.kappa, params.r_e
    C_fr, C_rr = params.C_fr, params.C_rr
    B_scale, C_scale, mu_scale = tire_scales[0], tire_scales[1], tire_scales[2]
    B_f, C_f, D_f = tires.B_f * B_scale, tires.C_f * C_scale, tires.D_f * mu_scale
    B_r, C_r, D_r = tires.B_r * B_scale, tires.C_r * C_scale, tires.D_r * mu_scale
    atan, sin, cos, sqrt = math.atan, math.sin, math.cos, math.sqrt

    def f(x, u):
        phi, v_x, v_y, r, T, delta = x[2], x[3], x[4], x[5], x[6], x[7]
        if v_x < v_min:
            raise DomainError(
                f"slip angles undefined: v_x={v_x:.3f} m/s below guard {v_min} m/s")
        alpha_f = atan((v_y + l_f * r) / v_x) - delta
        alpha_r = atan((-v_y + l_r * r) / v_x)
        F_fy = D_f * sin(C_f * atan(B_f * alpha_f))
        F_ry = D_r * sin(C_r * atan(B_r * alpha_r))
        T_eff = T * torque_gain
        F_fx = kap * T_eff / r_e - C_fr
        F_rx = (1.0 - kap) * T_eff / r_e - C_rr
        if coupling_on:
            F_fy = F_fy * sqrt(max(0.0, 1.0 - (F_fx / D_f) ** 2))
            F_ry = F_ry * sqrt(max(0.0, 1.0 - (F_rx / D_r) ** 2))
        F_d = C_w * v_x * v_x
        cos_d = cos(delta)
        sin_d = sin(delta)
        return (
            v_x * cos(phi) - v_y * sin(phi),
            v_x * sin(phi) + v_y * cos(phi),
            r,
            (F_rx - F_d - F_fy * sin_d + F_fx * cos_d) / m + v_y * r,
            (F_ry + F_fy * cos_d + F_fx * sin_d) / m - v_x * r,
            ((F_fy * cos_d + F_fx * sin_d) * l_f - F_ry * l_r) / I_z,
            u[0],
            u[1],
        )

    return f


_SCALAR_DYNAMICS_CACHE: dict = {}


def _cached_scalar_dynamics(params, tires, v_min):
    key = (params, tires, v_min)
    f = _SCALAR_DYNAMICS_CACHE.get(key)
    if f is None:
        f = make_scalar_dynamics(params, tires, v_min)
        if len(_SCALAR_DYNAMICS_CACHE) > 64:
            _SCALAR_DYNAMICS_CACHE.clear()
        _SCALAR_DYNAMICS_CACHE[key] = f
    return f


def scalar_rk4(f, x, u, dt: float, substeps: int):
    """RK4 over tuple states; mirrors rk4_step arithmetic term for term."""
    h = dt / substeps
    for _ in range(substeps):
        k1 = f(x, u)
        k2 = f(tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k1)), u)
        k3 = f(tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k2)), u)
        k4 = f(tuple(xi + h * ki for xi, ki in zip(x, k3)), u)
        x = tuple(xi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                  for xi, a, b, c, d in zip(x, k1, k2, k3, k4))
    return x


def discretize_array(x, u, dt: float, params: VehicleParams, tires: TireParams,
                     v_min: float = DEFAULT_V_MIN):
    """RK4 step of the nominal model over one interval; this map is the
    discrete nominal model used for predictions, labels, and linearization.

    Single states take a scalar fast path (plain-float math); batches use the
    vectorized dynamics. Both evaluate the same formulas in the same order.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        u = np.asarray(u, dtype=float)
        out = scalar_rk4(_cached_scalar_dynamics(params, tires, v_min),
                         tuple(x.tolist()), (float(u[0]), float(u[1])),
                         dt, RK4_SUBSTEPS)
        return np.array(out)
    return rk4_step(lambda xs, us: dynamics(xs, us, params, tires, v_min),
                    x, u, dt, RK4_SUBSTEPS)


def discretize(state: VehicleState, inp: ControlInput, dt: float,
               params: VehicleParams, tires: TireParams,
               v_min: float = DEFAULT_V_MIN) -> VehicleState:
    x1 = discretize_array(state.as_array(), inp.as_array(), dt, params, tires, v_min)
    return VehicleState.from_array(x1)


FD_STEP = 1e-5  # relative central-difference step for linearization


def linearize_batch(X, U, dt: float, params: VehicleParams, tires: TireParams,
                    v_min: float = DEFAULT_V_MIN):
    """Jacobians of the discrete map for a batch of points.

    X: (n, 8), U: (n, 2)  ->  A: (n, 8, 8), B: (n, 8, 2)
    Central finite differences with a per-coordinate step scaled by magnitude,
    evaluated in a single vectorized RK4 call.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = X.shape[0]
    nd = N_STATES + N_INPUTS

    hx = FD_STEP * np.maximum(1.0, np.abs(X))          # (n, 8)
    hu = FD_STEP * np.maximum(1.0, np.abs(U))          # (n, 2)

    # stack [x + h e_i, x - h e_i] for each state dim, then each input dim
    Xp = np.repeat(X[:, None, :], 2 * nd, axis=1)      # (n, 20, 8)
    Up = np.repeat(U[:, None, :], 2 * nd, axis=1)      # (n, 20, 2)
    for i in range(N_STATES):
        Xp[:, 2 * i, i] += hx[:, i]
        Xp[:, 2 * i + 1, i] -= hx[:, i]
    for j in range(N_INPUTS):
        k = N_STATES + j
        Up[:, 2 * k, j] += hu[:, j]
        Up[:, 2 * k + 1, j] -= hu[:, j]

    F = discretize_array(Xp.reshape(-1, N_STATES), Up.reshape(-1, N_INPUTS),
                         dt, params, tires, v_min).reshape(n, 2 * nd, N_STATES)

    A = np.empty((n, N_STATES, N_STATES))
    B = np.empty((n, N_STATES, N_INPUTS))
    for i in range(N_STATES):
        A[:, :, i] = (F[:, 2 * i] - F[:, 2 * i + 1]) / (2.0 * hx[:, i, None])
    for j in range(N_INPUTS):
        k = N_STATES + j
        B[:, :, j] = (F[:, 2 * k] - F[:, 2 * k + 1]) / (2.0 * hu[:, j, None])
    return A, B


def linearize(state: VehicleState, inp: ControlInput, dt: float,
              params: VehicleParams, tires: TireParams,
              v_min: float = DEFAULT_V_MIN):
    """Jacobians (A: 8x8, B: 8x2) of the discrete map at a single point."""
    A, B = linearize_batch(state.as_array()[None], inp.as_array()[None],
                           dt, params, tires, v_min)
    return A[0], B[0]


def residual_label_array(x, u, x_next_measured, dt: float,
                         params: VehicleParams, tires: TireParams,
                         v_min: float = DEFAULT_V_MIN):
    """Velocity-state residual y = measured - nominal prediction, shape (..., 3)."""
    x_pred = discretize_array(x, u, dt, params, tires, v_min)
    diff = np.asarray(x_next_measured, dtype=float) - x_pred
    return diff[..., list(VELOCITY_ROWS)]


def residual_label(state: VehicleState, inp: ControlInput,
                   next_measured: VehicleState, dt: float,
                   params: VehicleParams, tires: TireParams) -> np.ndarray:
    return residual_label_array(state.as_array(), inp.as_array(),
                                next_measured.as_array(), dt, params, tires)


def features_array(x, params: VehicleParams, t_max: float,
                   v_min: float = DEFAULT_V_MIN):
    """Residual-model features (alpha_f, alpha_r, T / t_max), shape (..., 3)."""
    alpha_f, alpha_r = slip_angles_array(x, params, v_min)
    x = np.asarray(x, dtype=float)
    return np.stack([alpha_f, alpha_r, x[..., IT] / t_max], axis=-1)


def features(state: VehicleState, params: VehicleParams, t_max: float) -> np.ndarray:
    return features_array(state.as_array(), params, t_max)

"""Synthetic ground-truth vehicle with deliberately perturbed tire behavior.

The plant integrates the same single-track equations as the nominal model but
with scaled Magic Formula coefficients, a torque-delivery gain, and an
optional friction-ellipse coupling that derates lateral force under combined
slip. The resulting nominal-model error is a smooth function of
(alpha_f, alpha_r, T), which is exactly the structure the online learner is
meant to pick up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .vehicle import (
    DEFAULT_V_MIN,
    RK4_SUBSTEPS,
    IR,
    IT,
    IVX,
    IVY,
    TireParams,
    VehicleParams,
    VehicleState,
    compose_derivative,
    magic_formula,
    make_scalar_dynamics,
    rk4_step,
    scalar_rk4,
    slip_angles_array,
)


@dataclass(frozen=True)
class PlantPerturbation:
    """How the plant's tires deviate from the nominal model."""

    mu_scale: float = 0.8     # peak-force multiplier on D_f, D_r; in (0, 1.5]
    B_scale: float = 1.0      # stiffness multiplier
    C_scale: float = 1.0      # shape multiplier
    coupling_on: bool = True  # friction-ellipse derating of lateral force
    torque_gain: float = 0.9  # multiplier on delivered torque
    measurement_noise: tuple = (0.01, 0.01, 0.005)  # std dev on (v_x, v_y, r)

    def __post_init__(self):
        if not 0.0 < self.mu_scale <= 1.5:
            raise ValueError("mu_scale must lie in (0, 1.5]")
        if self.B_scale <= 0 or self.C_scale <= 0 or self.torque_gain <= 0:
            raise ValueError("B_scale, C_scale, torque_gain must be > 0")
        if any(s < 0 for s in self.measurement_noise):
            raise ValueError("measurement noise std devs must be >= 0")

    @classmethod
    def identity(cls) -> "PlantPerturbation":
        """No perturbation and no noise: the plant degenerates to the nominal model."""
        return cls(mu_scale=1.0, B_scale=1.0, C_scale=1.0, coupling_on=False,
                   torque_gain=1.0, measurement_noise=(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class SafetyEnvelope:
    """Plant states outside these bounds flag a crashed run."""

    v_x_min: float = 0.5    # m/s
    v_x_max: float = 60.0   # m/s
    v_y_max: float = 8.0    # m/s (absolute)
    r_max: float = 4.0      # rad/s (absolute)

    def check(self, x: np.ndarray) -> None:
        v_x, v_y, r = x[IVX], x[IVY], x[IR]
        if not (self.v_x_min <= v_x <= self.v_x_max):
            raise DomainError(f"plant left safe envelope: v_x={v_x:.3f} m/s")
        if abs(v_y) > self.v_y_max:
            raise DomainError(f"plant left safe envelope: v_y={v_y:.3f} m/s")
        if abs(r) > self.r_max:
            raise DomainError(f"plant left safe envelope: r={r:.3f} rad/s")


def plant_dynamics(x, u, params: VehicleParams, tires: TireParams,
                   pert: PlantPerturbation, v_min: float = DEFAULT_V_MIN):
    """Continuous-time derivative of the perturbed plant, shape (..., 8)."""
    x = np.asarray(x, dtype=float)
    alpha_f, alpha_r = slip_angles_array(x, params, v_min)

    D_f = tires.D_f * pert.mu_scale
    D_r = tires.D_r * pert.mu_scale
    F_fy = magic_formula(alpha_f, tires.B_f * pert.B_scale, tires.C_f * pert.C_scale, D_f)
    F_ry = magic_formula(alpha_r, tires.B_r * pert.B_scale, tires.C_r * pert.C_scale, D_r)

    T_eff = x[..., IT] * pert.torque_gain
    F_fx = params.kappa * T_eff / params.r_e - params.C_fr
    F_rx = (1.0 - params.kappa) * T_eff / params.r_e - params.C_rr

    if pert.coupling_on:
        # friction ellipse against the plant's own (scaled) peak force
        F_fy = F_fy * np.sqrt(np.maximum(0.0, 1.0 - (F_fx / D_f) ** 2))
        F_ry = F_ry * np.sqrt(np.maximum(0.0, 1.0 - (F_rx / D_r) ** 2))

    return compose_derivative(x, u, F_fx, F_rx, F_fy, F_ry, params)


_PLANT_DYNAMICS_CACHE: dict = {}


def _cached_plant_scalar_dynamics(params, tires, pert, v_min):
    key = (params, tires, pert, v_min)
    f = _PLANT_DYNAMICS_CACHE.get(key)
    if f is None:
        f = make_scalar_dynamics(params, tires, v_min,
                                 tire_scales=(pert.B_scale, pert.C_scale, pert.mu_scale),
                                 torque_gain=pert.torque_gain,
                                 coupling_on=pert.coupling_on)
        if len(_PLANT_DYNAMICS_CACHE) > 64:
            _PLANT_DYNAMICS_CACHE.clear()
        _PLANT_DYNAMICS_CACHE[key] = f
    return f


def plant_step_array(x, u, dt: float, params: VehicleParams, tires: TireParams,
                     pert: PlantPerturbation, rng: np.random.Generator | None = None,
                     envelope: SafetyEnvelope | None = None,
                     v_min: float = DEFAULT_V_MIN) -> np.ndarray:
    """Integrate the plant one step and add measurement noise to (v_x, v_y, r)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1:
        out = scalar_rk4(_cached_plant_scalar_dynamics(params, tires, pert, v_min),
                         tuple(x.tolist()), (float(u[0]), float(u[1])),
                         dt, RK4_SUBSTEPS)
        x1 = np.array(out)
    else:
        x1 = rk4_step(lambda xs, us: plant_dynamics(xs, us, params, tires, pert, v_min),
                      x, u, dt, RK4_SUBSTEPS)
    sigma = np.asarray(pert.measurement_noise, dtype=float)
    if np.any(sigma > 0):
        if rng is None:
            raise ValueError("an rng is required when measurement noise is nonzero")
        noise = rng.normal(0.0, sigma)
        if x1.base is not None or x1.ndim > 1:
            x1 = x1.copy()
        x1[..., IVX] += noise[0]
        x1[..., IVY] += noise[1]
        x1[..., IR] += noise[2]
    if envelope is not None:
        envelope.check(x1)
    return x1


def plant_step(state: VehicleState, inp, dt: float, params: VehicleParams,
               tires: TireParams, pert: PlantPerturbation,
               rng: np.random.Generator | None = None,
               envelope: SafetyEnvelope | None = None) -> VehicleState:
    u = inp.as_array() if hasattr(inp, "as_array") else np.asarray(inp, dtype=float)
    x1 = plant_step_array(state.as_array(), u, dt, params, tires, pert, rng, envelope)
    return VehicleState.from_array(x1)

"""Valid region of the feature space and its uniform cubic partition.

The valid region is the intersection of three constraint families evaluated
with the nominal tire model: a tire-force contact ellipse per axle, symmetric
slip-angle bounds, and a bound on the front/rear slip-angle difference. The
bounding box |alpha| <= alpha_max x |T_norm| <= 1 is tiled with half-open
cubic cells; validity is checked pointwise, so cells straddling the curved
region boundary simply never receive invalid samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRegion
from .vehicle import TireParams, VehicleParams, longitudinal_forces, magic_formula

# violation labels returned by check_validity
VIOLATION_ELLIPSE_FRONT = "tire-ellipse-front"
VIOLATION_ELLIPSE_REAR = "tire-ellipse-rear"
VIOLATION_SLIP_FRONT = "slip-angle-front"
VIOLATION_SLIP_REAR = "slip-angle-rear"
VIOLATION_SLIP_DIFF = "slip-angle-difference"
VIOLATION_TORQUE_RANGE = "torque-range"
VIOLATION_NONFINITE = "non-finite"

CellIndex = tuple[int, int, int]


@dataclass(frozen=True)
class RegionSpec:
    """Constraint parameters and partition geometry of the valid region."""

    alpha_max: float = 0.18    # rad, bound on |alpha_f|, |alpha_r|
    dalpha_max: float = 0.10   # rad, bound on |alpha_f - alpha_r|
    p_long: float = 0.9        # longitudinal weight in the contact ellipse
    p_ellipse: float = 0.95    # ellipse size as a fraction of peak force D
    t_max: float = 1000.0      # N*m, torque normalization; features use T / t_max
    cell_edges: tuple = (0.02, 0.02, 0.1)  # (rad, rad, normalized torque)

    def __post_init__(self):
        if self.alpha_max <= 0 or self.dalpha_max <= 0 or self.t_max <= 0:
            raise ValueError("alpha_max, dalpha_max, t_max must be > 0")
        if not 0.0 < self.p_ellipse <= 1.0:
            raise ValueError("p_ellipse must lie in (0, 1]")
        if self.p_long <= 0:
            raise ValueError("p_long must be > 0")
        edges = np.asarray(self.cell_edges, dtype=float)
        if edges.shape != (3,) or np.any(edges <= 0):
            raise ValueError("cell_edges must be 3 positive values")
        object.__setattr__(self, "_edges", edges)
        lo = np.array([-self.alpha_max, -self.alpha_max, -1.0])
        hi = np.array([self.alpha_max, self.alpha_max, 1.0])
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        # one extra cell per axis so exact top-boundary points stay in-lattice
        n = np.floor((hi - lo) / edges + 1e-12).astype(int) + 1
        object.__setattr__(self, "_n_cells", n)

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def box_lo(self) -> np.ndarray:
        return self._lo

    @property
    def box_hi(self) -> np.ndarray:
        return self._hi

    @property
    def cells_per_axis(self) -> np.ndarray:
        return self._n_cells

    @property
    def total_cells(self) -> int:
        return int(np.prod(self._n_cells))


def check_validity(z, params: VehicleParams, tires: TireParams,
                   spec: RegionSpec) -> list[str]:
    """Violation labels for a feature point; empty list means valid.

    Tire forces are evaluated from the nominal model at z, with the torque
    recovered as T = z[2] * t_max.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        return [VIOLATION_NONFINITE]
    alpha_f, alpha_r, t_norm = z
    out = []

    T = t_norm * spec.t_max
    F_fx, F_rx = longitudinal_forces(T, params)
    F_fy = magic_formula(alpha_f, tires.B_f, tires.C_f, tires.D_f)
    F_ry = magic_formula(alpha_r, tires.B_r, tires.C_r, tires.D_r)
    if (spec.p_long * F_fx) ** 2 + F_fy**2 > (spec.p_ellipse * tires.D_f) ** 2:
        out.append(VIOLATION_ELLIPSE_FRONT)
    if (spec.p_long * F_rx) ** 2 + F_ry**2 > (spec.p_ellipse * tires.D_r) ** 2:
        out.append(VIOLATION_ELLIPSE_REAR)

    if abs(alpha_f) > spec.alpha_max:
        out.append(VIOLATION_SLIP_FRONT)
    if abs(alpha_r) > spec.alpha_max:
        out.append(VIOLATION_SLIP_REAR)
    if abs(alpha_f - alpha_r) > spec.dalpha_max:
        out.append(VIOLATION_SLIP_DIFF)

    # keeps every valid point inside the partition's bounding box
    if abs(t_norm) > 1.0:
        out.append(VIOLATION_TORQUE_RANGE)
    return out


def is_valid(z, params: VehicleParams, tires: TireParams,
             spec: RegionSpec) -> tuple[bool, list[str]]:
    """Whether a feature point lies in the valid region, plus its violations."""
    violations = check_validity(z, params, tires, spec)
    return not violations, violations


def cell_of(z, spec: RegionSpec) -> CellIndex:
    """Lattice cell containing a feature point.

    Cells are half-open boxes [a, a + edge); a boundary point belongs to the
    cell whose lower boundary it sits on. Points of the closed bounding box
    always map to a cell; anything strictly outside raises OutOfRegion.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < spec.box_lo) or np.any(z > spec.box_hi):
        raise OutOfRegion(f"feature {z} outside bounding box")
    q = (z - spec.box_lo) / spec.edges
    idx = np.floor(q).astype(int)
    # points within 1e-9 cell widths of an upper boundary are snapped onto it,
    # so lattice-boundary coordinates resolve to the positive side despite
    # floating-point rounding of (z - lo) / edge
    idx = np.where(q - idx >= 1.0 - 1e-9, idx + 1, idx)
    idx = np.minimum(idx, spec.cells_per_axis - 1)  # exact top face stays in-lattice
    return int(idx[0]), int(idx[1]), int(idx[2])


def cell_center(cell: CellIndex, spec: RegionSpec) -> np.ndarray:
    """Geometric center of a cell, useful for diagnostics and plotting."""
    idx = np.asarray(cell, dtype=float)
    return spec.box_lo + (idx + 0.5) * spec.edges

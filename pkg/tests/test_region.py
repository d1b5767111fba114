import numpy as np
import pytest

from splitgp.errors import OutOfRegion
from splitgp.region import (
    VIOLATION_SLIP_DIFF,
    VIOLATION_SLIP_FRONT,
    VIOLATION_TORQUE_RANGE,
    RegionSpec,
    cell_of,
    check_validity,
    is_valid,
)
from splitgp.vehicle import TireParams, VehicleParams

PARAMS = VehicleParams()
TIRES = TireParams()
SPEC = RegionSpec()


class TestValidity:
    def test_origin_is_valid(self):
        p = VehicleParams(C_fr=1e-9, C_rr=1e-9)
        ok, violations = is_valid(np.zeros(3), p, TIRES, SPEC)
        assert ok and violations == []

    def test_slip_angle_bound(self):
        ok, violations = is_valid(np.array([0.19, 0.15, 0.0]), PARAMS, TIRES, SPEC)
        assert not ok
        assert VIOLATION_SLIP_FRONT in violations

    def test_slip_difference_bound(self):
        ok, violations = is_valid(np.array([0.12, 0.0, 0.0]), PARAMS, TIRES, SPEC)
        assert not ok
        assert violations == [VIOLATION_SLIP_DIFF]

    def test_ellipse_bound(self):
        # saturated slip angle plus full torque exceeds the front contact ellipse
        spec = RegionSpec(p_ellipse=0.8, alpha_max=0.3, dalpha_max=0.5, t_max=5000.0)
        z = np.array([0.17, 0.15, 1.0])
        violations = check_validity(z, PARAMS, TIRES, spec)
        assert any(v.startswith("tire-ellipse") for v in violations)

    def test_torque_range(self):
        violations = check_validity(np.array([0.0, 0.0, 1.2]), PARAMS, TIRES, SPEC)
        assert violations == [VIOLATION_TORQUE_RANGE]

    def test_nonfinite_rejected(self):
        violations = check_validity(np.array([np.nan, 0.0, 0.0]), PARAMS, TIRES, SPEC)
        assert violations


class TestPartition:
    def test_interior_points_share_cell(self):
        a = cell_of(np.array([0.019, 0.019, 0.09]), SPEC)
        b = cell_of(np.array([0.001, 0.001, 0.01]), SPEC)
        assert a == b

    def test_half_open_boundary(self):
        lo = cell_of(np.array([0.019, 0.0, 0.0]), SPEC)
        hi = cell_of(np.array([0.020, 0.0, 0.0]), SPEC)
        assert hi[0] == lo[0] + 1
        assert hi[1:] == lo[1:]

    def test_out_of_region(self):
        with pytest.raises(OutOfRegion):
            cell_of(np.array([0.2, 0.0, 0.0]), SPEC)
        with pytest.raises(OutOfRegion):
            cell_of(np.array([0.0, 0.0, -1.01]), SPEC)

    def test_box_corners_stay_in_lattice(self):
        n = SPEC.cells_per_axis
        for corner in ([-0.18, -0.18, -1.0], [0.18, 0.18, 1.0], [0.18, -0.18, 1.0]):
            idx = cell_of(np.array(corner), SPEC)
            assert all(0 <= idx[k] < n[k] for k in range(3))

    def test_tiling_property(self):
        # every point of the box maps to exactly one cell whose half-open
        # bounds contain it
        rng = np.random.default_rng(23)
        pts = rng.uniform(SPEC.box_lo, SPEC.box_hi, size=(2000, 3))
        # add boundary probes on exact cell edges
        probes = SPEC.box_lo + SPEC.edges * rng.integers(0, 15, size=(200, 3))
        pts = np.vstack([pts, np.clip(probes, SPEC.box_lo, SPEC.box_hi)])
        eps = 1e-9 * SPEC.edges  # snap tolerance of the boundary rule
        for z in pts:
            i = np.array(cell_of(z, SPEC))
            lo = SPEC.box_lo + i * SPEC.edges
            hi_edge = lo + SPEC.edges
            at_top = i == SPEC.cells_per_axis - 1
            inside = (z >= lo - eps) & ((z < hi_edge + eps) | at_top)
            assert inside.all(), (z, i)

    def test_translation_consistency(self):
        rng = np.random.default_rng(29)
        for _ in range(500):
            z = rng.uniform(SPEC.box_lo + 0.001, SPEC.box_hi - SPEC.edges - 0.001)
            a = np.array(cell_of(z, SPEC))
            b = np.array(cell_of(z + SPEC.edges, SPEC))
            np.testing.assert_array_equal(b, a + 1)

    def test_counts(self):
        assert SPEC.total_cells == int(np.prod(SPEC.cells_per_axis))
        assert SPEC.cells_per_axis.tolist() == [19, 19, 21]

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            RegionSpec(alpha_max=-0.1)
        with pytest.raises(ValueError):
            RegionSpec(p_ellipse=1.5)
        with pytest.raises(ValueError):
            RegionSpec(cell_edges=(0.02, 0.02))

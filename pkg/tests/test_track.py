import numpy as np
import pytest

from splitgp.errors import ConfigError
from splitgp.track import TrackModel, lag_contour_errors, make_desk_circuit


@pytest.fixture(scope="module")
def track():
    return TrackModel(make_desk_circuit(), tube_radius=4.0)


class TestTrackModel:
    def test_length_near_200m(self, track):
        assert 195.0 < track.length < 210.0

    def test_closed_loop_continuity(self, track):
        np.testing.assert_allclose(track.position(0.0), track.position(track.length),
                                   atol=1e-9)

    def test_near_unit_speed_parameterization(self, track):
        s = np.linspace(0, track.length, 400)
        speed = np.hypot(track._dsx(s), track._dsy(s))
        np.testing.assert_allclose(speed, 1.0, atol=1e-3)

    def test_tangent_heading_on_straight(self, track):
        # the first straight runs along +x
        assert abs(track.heading(10.0)) < 0.05

    def test_projection_recovers_progress(self, track):
        for s0 in [5.0, 42.0, 77.0, 130.0, 180.0]:
            x, y = track.position(s0)
            assert track.project(x, y) == pytest.approx(s0, abs=1e-6)
            assert track.project(x, y, s_hint=s0 + 3.0) == pytest.approx(s0, abs=1e-6)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigError):
            TrackModel(np.zeros((2, 2)))
        with pytest.raises(ConfigError):
            TrackModel(make_desk_circuit(), tube_radius=-1.0)

    def test_from_file(self, tmp_path, track):
        path = tmp_path / "track.csv"
        pts = make_desk_circuit()
        np.savetxt(path, pts, header="X Y")
        loaded = TrackModel.from_file(path)
        assert loaded.length == pytest.approx(track.length, abs=1e-9)


class TestLagContourErrors:
    def test_on_centerline(self, track):
        x, y = track.position(25.0)
        e_l, e_c = lag_contour_errors(float(x), float(y), 25.0, track)
        assert abs(e_l) < 1e-9 and abs(e_c) < 1e-9

    def test_lateral_offset_sign(self, track):
        # zero-heading point: offset +d in y gives e_c = -d, e_l = 0
        s = 10.0
        phi = float(track.heading(s))
        x, y = track.position(s)
        d = 0.7
        e_l, e_c = lag_contour_errors(float(x - d * np.sin(phi)),
                                      float(y + d * np.cos(phi)), s, track)
        assert e_c == pytest.approx(-d, abs=1e-9)
        assert e_l == pytest.approx(0.0, abs=1e-9)

    def test_ahead_offset_sign(self, track):
        s = 10.0
        phi = float(track.heading(s))
        x, y = track.position(s)
        a = 1.3
        e_l, e_c = lag_contour_errors(float(x + a * np.cos(phi)),
                                      float(y + a * np.sin(phi)), s, track)
        assert e_l == pytest.approx(-a, abs=1e-9)
        assert e_c == pytest.approx(0.0, abs=1e-9)

"""Arc-length parameterized closed track centerline.

Waypoints are splined twice: a periodic cubic spline in chord-length
parameter is resampled densely to build an arc-length table, and a second
periodic spline over arc length gives near-unit-speed position, tangent
heading, and heading rate queries. A coarse projection table plus local
refinement maps vehicle positions back to track progress.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError


class TrackModel:
    def __init__(self, waypoints, tube_radius: float = 4.0, resample: int = 4000):
        waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
        if waypoints.ndim != 2 or waypoints.shape[1] != 2 or waypoints.shape[0] < 4:
            raise ConfigError("track needs at least 4 (X, Y) waypoints")
        if tube_radius <= 0:
            raise ConfigError("tube radius must be > 0")
        self.tube_radius = float(tube_radius)

        pts = waypoints
        if np.linalg.norm(pts[0] - pts[-1]) > 1e-9:
            pts = np.vstack([pts, pts[0]])  # close the loop

        chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        if np.any(np.diff(chord) <= 0):
            raise ConfigError("track waypoints contain duplicates")
        sx = CubicSpline(chord, pts[:, 0], bc_type="periodic")
        sy = CubicSpline(chord, pts[:, 1], bc_type="periodic")

        # resample densely and re-parameterize by arc length
        t = np.linspace(0.0, chord[-1], resample + 1)
        xy = np.column_stack([sx(t), sy(t)])
        seg = np.linalg.norm(np.diff(xy, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(s[-1])
        self._sx = CubicSpline(s, xy[:, 0], bc_type="periodic")
        self._sy = CubicSpline(s, xy[:, 1], bc_type="periodic")
        self._dsx = self._sx.derivative()
        self._dsy = self._sy.derivative()
        self._ddsx = self._dsx.derivative()
        self._ddsy = self._dsy.derivative()

        # coarse lookup table for projection
        self._table_s = np.linspace(0.0, self.length, 2048, endpoint=False)
        self._table_xy = np.column_stack([self._sx(self._table_s), self._sy(self._table_s)])

    @classmethod
    def from_file(cls, path, tube_radius: float = 4.0) -> "TrackModel":
        """Load a plain-text table of X Y centerline points ('#' comments)."""
        try:
            pts = np.loadtxt(path, comments="#", delimiter=None)
        except OSError as exc:
            raise ConfigError(f"cannot read track file {path}: {exc}") from exc
        return cls(pts, tube_radius=tube_radius)

    def wrap(self, s):
        return np.mod(s, self.length)

    def position(self, s):
        """Centerline point(s) at progress s; returns shape (..., 2)."""
        s = self.wrap(np.asarray(s, dtype=float))
        return np.stack([self._sx(s), self._sy(s)], axis=-1)

    def heading(self, s):
        """Tangent heading angle(s) at progress s."""
        s = self.wrap(np.asarray(s, dtype=float))
        return np.arctan2(self._dsy(s), self._dsx(s))

    def heading_rate(self, s):
        """d(heading)/ds, the signed curvature of the near-unit-speed spline."""
        s = self.wrap(np.asarray(s, dtype=float))
        dx, dy = self._dsx(s), self._dsy(s)
        ddx, ddy = self._ddsx(s), self._ddsy(s)
        return (dx * ddy - dy * ddx) / (dx * dx + dy * dy)

    def project(self, x: float, y: float, s_hint: float | None = None) -> float:
        """Progress of the closest centerline point to (x, y).

        With a hint, searches only a local window so that projection stays
        continuous lap over lap; without one, searches the whole table.
        """
        p = np.array([x, y])
        if s_hint is None:
            d2 = np.sum((self._table_xy - p) ** 2, axis=1)
            s0 = self._table_s[int(np.argmin(d2))]
        else:
            window = 20.0  # m
            offs = np.linspace(-window, window, 81)
            cand = self.wrap(s_hint + offs)
            xy = self.position(cand)
            s0 = cand[int(np.argmin(np.sum((xy - p) ** 2, axis=1)))]
        # golden-section style refinement around s0
        lo, hi = s0 - 1.0, s0 + 1.0
        for _ in range(40):
            m1 = lo + 0.382 * (hi - lo)
            m2 = lo + 0.618 * (hi - lo)
            d1 = np.sum((self.position(m1) - p) ** 2)
            d2 = np.sum((self.position(m2) - p) ** 2)
            if d1 < d2:
                hi = m2
            else:
                lo = m1
        return float(self.wrap(0.5 * (lo + hi)))


def lag_contour_errors(x: float, y: float, s: float, track: TrackModel):
    """Longitudinal (lag) and lateral (contour) errors of a position
    relative to the centerline point at progress s."""
    cx, cy = track.position(s)
    phi = track.heading(s)
    dx, dy = x - cx, y - cy
    e_lag = -np.cos(phi) * dx - np.sin(phi) * dy
    e_contour = np.sin(phi) * dx - np.cos(phi) * dy
    return float(e_lag), float(e_contour)


def make_desk_circuit() -> np.ndarray:
    """Desk-scale closed circuit: two straights joined by two double-arc
    turns (four curves), roughly 200 m around."""
    pts = []

    def straight(p0, heading, length, step=2.0):
        n = int(np.ceil(length / step))
        for i in range(n):
            d = length * i / n
            pts.append([p0[0] + d * np.cos(heading), p0[1] + d * np.sin(heading)])
        return [p0[0] + length * np.cos(heading), p0[1] + length * np.sin(heading)], heading

    def arc(p0, heading, radius, angle, step=2.0):
        # positive angle turns left; the center sits 90 deg to that side
        n = max(3, int(np.ceil(abs(angle) * radius / step)))
        side = 1.0 if angle > 0 else -1.0
        cx = p0[0] - side * radius * np.sin(heading)
        cy = p0[1] + side * radius * np.cos(heading)
        a0 = np.arctan2(p0[1] - cy, p0[0] - cx)
        for i in range(n):
            a = a0 + angle * i / n
            pts.append([cx + radius * np.cos(a), cy + radius * np.sin(a)])
        a1 = a0 + angle
        return [cx + radius * np.cos(a1), cy + radius * np.sin(a1)], heading + angle

    p, h = [0.0, 0.0], 0.0
    p, h = straight(p, h, 50.0)
    p, h = arc(p, h, 15.0, np.pi / 2)
    p, h = arc(p, h, 20.0, np.pi / 2)
    p, h = straight(p, h, 40.0)
    p, h = arc(p, h, 20.0, np.pi / 2)
    p, h = arc(p, h, 15.0, np.pi / 2)
    return np.asarray(pts)

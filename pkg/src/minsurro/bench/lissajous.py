"""Lissajous centerline and Frenet-frame kinematics of a unicycle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return -((np.pi - np.asarray(a, dtype=float)) % (2 * np.pi) - np.pi)


class LissajousPath:
    """p_x = A sin(a t + delta), p_y = B sin(b t), t in [0, 2 pi).

    Arc length is tabulated on a dense t grid and refined with Gauss-Legendre
    quadrature inside a table cell, so s(t) and its inverse are accurate to
    rounding.
    """

    def __init__(self, A=1.5, B=2.0, a=3.0, b=2.0, delta=np.pi / 2, n_table: int = 20001):
        self.A, self.B, self.a, self.b, self.delta = A, B, a, b, delta
        self.t_table = np.linspace(0.0, 2 * np.pi, n_table)
        speed = self.speed(self.t_table)
        # trapezoid seed, then exact per-cell quadrature
        cells = np.diff(self.t_table)
        mids = 0.5 * (self.t_table[:-1] + self.t_table[1:])
        cell_len = np.zeros_like(mids)
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            cell_len += w * self.speed(mids + 0.5 * cells * node)
        cell_len *= 0.5 * cells
        self.arc_table = np.concatenate([[0.0], np.cumsum(cell_len)])
        if not np.all(np.diff(self.arc_table) > 0):
            raise RuntimeError("arc-length table is not strictly increasing")
        self.length = float(self.arc_table[-1])
        self._trapezoid_length = float(cumulative_trapezoid(speed, self.t_table)[-1])
        pos = self.position(self.t_table)
        self._table_xy = np.stack(pos, axis=-1)

    # analytic curve
    def position(self, t):
        t = np.asarray(t, dtype=float)
        return self.A * np.sin(self.a * t + self.delta), self.B * np.sin(self.b * t)

    def first(self, t):
        t = np.asarray(t, dtype=float)
        return self.A * self.a * np.cos(self.a * t + self.delta), self.B * self.b * np.cos(self.b * t)

    def second(self, t):
        t = np.asarray(t, dtype=float)
        return -self.A * self.a**2 * np.sin(self.a * t + self.delta), -self.B * self.b**2 * np.sin(self.b * t)

    def speed(self, t):
        dx, dy = self.first(t)
        return np.hypot(dx, dy)

    def point(self, t):
        """Position, heading atan2(y', x') and signed curvature at parameter t."""
        dx, dy = self.first(t)
        ddx, ddy = self.second(t)
        sp2 = dx * dx + dy * dy
        if np.any(np.sqrt(sp2) < 1e-9):
            raise ValueError("degenerate tangent: curve speed below 1e-9")
        heading = np.arctan2(dy, dx)
        curvature = (dx * ddy - dy * ddx) / sp2**1.5
        return np.stack(self.position(t), axis=-1), heading, curvature

    # arc length <-> t
    def arc_length(self, t):
        """Unnormalized arc length from t=0 (t taken modulo 2 pi)."""
        t = np.mod(np.asarray(t, dtype=float), 2 * np.pi)
        h = self.t_table[1] - self.t_table[0]
        i = np.clip((t / h).astype(int), 0, len(self.t_table) - 2)
        t0 = self.t_table[i]
        half = 0.5 * (t - t0)
        acc = np.zeros_like(t)
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            acc += w * self.speed(t0 + half * (node + 1.0))
        return self.arc_table[i] + half * acc

    def s_of_t(self, t):
        return self.arc_length(t) / self.length

    def t_of_s(self, s):
        """Inverse of s(t) for normalized s (taken modulo 1)."""
        s = np.mod(np.asarray(s, dtype=float), 1.0)
        target = s * self.length
        t = np.interp(target, self.arc_table, self.t_table)
        for _ in range(3):
            t = t - (self.arc_length(t) - target) / self.speed(t)
            t = np.clip(t, 0.0, 2 * np.pi)
        return t

    def heading_at_s(self, s):
        return self.point(self.t_of_s(s))[1]

    def curvature_at_s(self, s):
        return self.point(self.t_of_s(s))[2]

    def heading_differences(self, s0: float, steps: int, spacing: float) -> np.ndarray:
        """psi_ref(s0 + k*spacing/L) - psi_ref(s0), k = 0..steps, wrapped; spacing in metres."""
        s = s0 + np.arange(steps + 1) * spacing / self.length
        psi = self.heading_at_s(s)
        return np.asarray(wrap_angle(psi - psi[0]))

    def nearest_table_index(self, xy, s_hint: float | None = None, window: float = 0.05) -> int:
        d2 = np.sum((self._table_xy - np.asarray(xy)) ** 2, axis=1)
        if s_hint is not None:
            s_tab = self.arc_table / self.length
            gap = np.abs(wrap_angle(2 * np.pi * (s_tab - s_hint))) / (2 * np.pi)
            d2 = np.where(gap <= window, d2, np.inf)
        best = d2.min()
        # ties within 1e-6 in distance: lowest s wins
        return int(np.flatnonzero(np.sqrt(d2) <= np.sqrt(best) + 1e-6)[0])


@dataclass
class FrenetState:
    s: float
    d: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.d, self.theta])

    @classmethod
    def from_array(cls, x) -> "FrenetState":
        return cls(float(x[0]), float(x[1]), float(x[2]))


def frenet_from_cartesian(pose, path: LissajousPath, s_hint: float | None = None) -> FrenetState:
    """(p_x, p_y, psi) -> (s, d, theta) relative to the nearest centerline point.

    d is positive to the left of the tangent; theta is wrapped to (-pi, pi].
    """
    px, py, psi = (float(v) for v in pose)
    i = path.nearest_table_index((px, py), s_hint)
    lo = path.t_table[max(i - 1, 0)]
    hi = path.t_table[min(i + 1, len(path.t_table) - 1)]

    def dist2(t):
        x, y = path.position(t)
        return (x - px) ** 2 + (y - py) ** 2

    t = float(minimize_scalar(dist2, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}).x)
    # the distance is flat at its minimum; Newton on (p - c(t)) . c'(t) = 0 recovers full precision
    for _ in range(3):
        x, y = path.position(t)
        dx, dy = path.first(t)
        ddx, ddy = path.second(t)
        r = (px - x) * dx + (py - y) * dy
        dr = (px - x) * ddx + (py - y) * ddy - (dx * dx + dy * dy)
        if dr >= 0:
            break
        t = float(np.clip(t - r / dr, lo, hi))
    (cx, cy), heading, _ = path.point(t)
    normal = np.array([-np.sin(heading), np.cos(heading)])
    d = float(np.array([px - cx, py - cy]) @ normal)
    s = float(np.mod(path.s_of_t(t), 1.0))
    return FrenetState(s, d, float(wrap_angle(psi - heading)))


def cartesian_from_frenet(state: FrenetState, path: LissajousPath) -> np.ndarray:
    t = path.t_of_s(state.s)
    (cx, cy), heading, _ = path.point(t)
    return np.array(
        [cx - state.d * np.sin(heading), cy + state.d * np.cos(heading), float(wrap_angle(heading + state.theta))]
    )


def frenet_rates_input_matrix(x, kappa: float, length: float) -> np.ndarray:
    """B(x) of the continuous Frenet kinematics; the drift is zero."""
    s, d, theta = x
    denom = 1.0 - d * kappa
    if abs(denom) <= 1e-6:
        raise ValueError("state beyond the local curvature radius (1 - d*kappa ~ 0)")
    s_dot_per_v = np.cos(theta) / (length * denom)
    return np.array(
        [
            [s_dot_per_v, 0.0],
            [np.sin(theta), 0.0],
            [-kappa * length * s_dot_per_v, 1.0],
        ]
    )


def frenet_dynamics_step(state: FrenetState, u, path: LissajousPath, dt: float) -> FrenetState:
    """Forward-Euler step x+ = A(x) + B(x) u with A(x) = x.

    s' = v cos(theta) / (L (1 - d kappa)),  d' = v sin(theta),
    theta' = omega - kappa L s'.
    """
    x = state.as_array()
    B = frenet_rates_input_matrix(x, float(path.curvature_at_s(state.s)), path.length)
    nxt = x + dt * B @ np.asarray(u, dtype=float)
    return FrenetState(float(np.mod(nxt[0], 1.0)), float(nxt[1]), float(nxt[2]))

"""Reference generators, planar inverse kinematics and segment programs.

Every generator returns joint-space ``(q_d, qd_dot, qd_ddot)`` with analytic
derivatives; task-space generators also expose the commanded point.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import IKRangeError


def planar_fk(q, lengths, base=(0.0, 0.0)):
    """End-effector position and end-link orientation ``(x, y, phi)``."""
    th = np.cumsum(q)
    L = np.asarray(lengths, dtype=float)
    return np.array([base[0] + np.dot(L, np.cos(th)), base[1] + np.dot(L, np.sin(th)), th[-1]])


def planar_jacobian(q, lengths):
    """3x3 Jacobian of ``planar_fk`` for a 3-link arm."""
    th = np.cumsum(q)
    L = np.asarray(lengths, dtype=float)
    px = -L * np.sin(th)
    py = L * np.cos(th)
    J = np.empty((3, len(q)))
    J[0] = np.cumsum(px[::-1])[::-1]
    J[1] = np.cumsum(py[::-1])[::-1]
    J[2] = 1.0
    return J


def planar_jacobian_dot(q, qdot, lengths):
    th = np.cumsum(q)
    thd = np.cumsum(qdot)
    L = np.asarray(lengths, dtype=float)
    px = -L * np.cos(th) * thd
    py = -L * np.sin(th) * thd
    Jd = np.empty((3, len(q)))
    Jd[0] = np.cumsum(px[::-1])[::-1]
    Jd[1] = np.cumsum(py[::-1])[::-1]
    Jd[2] = 0.0
    return Jd


def radial_orientation(target, base=(0.0, 0.0)):
    return math.atan2(target[1] - base[1], target[0] - base[0])


def planar_ik(target, lengths, elbow=-1, phi=None, base=(0.0, 0.0)):
    """Joint angles placing a 3-link arm's tip at ``target``.

    The redundancy is resolved by fixing the end-link orientation ``phi``;
    when omitted it points radially away from the base, which keeps the
    widest reachable annulus. ``elbow`` (+1/-1) selects the sign of ``q2``.
    """
    l1, l2, l3 = (float(v) for v in lengths)
    tx, ty = float(target[0]), float(target[1])
    if phi is None:
        phi = radial_orientation((tx, ty), base)
    wx = tx - base[0] - l3 * math.cos(phi)
    wy = ty - base[1] - l3 * math.sin(phi)
    d2 = wx * wx + wy * wy
    c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if abs(c2) > 1.0 + 1e-12:
        raise IKRangeError(f"target ({tx:.6g}, {ty:.6g}) is out of reach with orientation {phi:.6g}")
    c2 = min(1.0, max(-1.0, c2))
    q2 = math.copysign(math.acos(c2), elbow) if elbow else math.acos(c2)
    q1 = math.atan2(wy, wx) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    q3 = phi - q1 - q2
    q3 = math.remainder(q3, 2.0 * math.pi)
    return np.array([q1, q2, q3])


class Sinusoid:
    """``q_d = (1 + sin(t/2 - pi/2)) k_p`` on global time."""

    def __init__(self, k_p, rate=0.5, phase=-math.pi / 2):
        self.k_p = np.asarray(k_p, dtype=float)
        self.rate, self.phase = float(rate), float(phase)

    def __call__(self, t, tau):
        a = self.rate * t + self.phase
        w = self.rate
        return ((1.0 + math.sin(a)) * self.k_p, w * math.cos(a) * self.k_p,
                -w * w * math.sin(a) * self.k_p)

    def point(self, t, tau):
        return None


class Setpoint:
    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)

    def __call__(self, t, tau):
        z = np.zeros_like(self.q)
        return self.q.copy(), z, z.copy()

    def point(self, t, tau):
        return None


class Circle:
    """Task-space circle traced from its start phase on segment-local time.

    Joint references come from IK of the point plus the chosen end-link
    orientation; velocities and accelerations follow from the Jacobian.
    """

    def __init__(self, center, radius, omega, lengths, phase=0.0, base=(0.0, 0.0),
                 elbow=-1, orientation="radial", phi=0.0):
        if orientation not in ("radial", "tangent", "fixed"):
            raise ValueError(f"unknown orientation mode {orientation!r}")
        self.center = np.asarray(center, dtype=float)
        self.radius, self.omega, self.phase = float(radius), float(omega), float(phase)
        self.lengths = np.asarray(lengths, dtype=float)
        self.base = tuple(float(b) for b in base)
        self.elbow = elbow
        self.orientation = orientation
        self.phi = float(phi)

    def point(self, t, tau):
        a = self.omega * tau + self.phase
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def _task(self, tau):
        a = self.omega * tau + self.phase
        r, w = self.radius, self.omega
        p = self.center + r * np.array([math.cos(a), math.sin(a)])
        v = r * w * np.array([-math.sin(a), math.cos(a)])
        acc = -r * w * w * np.array([math.cos(a), math.sin(a)])
        if self.orientation == "radial":
            rx, ry = p[0] - self.base[0], p[1] - self.base[1]
            num = rx * v[1] - ry * v[0]
            den = rx * rx + ry * ry
            dnum = rx * acc[1] - ry * acc[0]
            dden = 2.0 * (rx * v[0] + ry * v[1])
            phi = math.atan2(ry, rx)
            phid = num / den
            phidd = (dnum * den - num * dden) / (den * den)
        elif self.orientation == "tangent":
            phi, phid, phidd = a + math.pi / 2, w, 0.0
        else:
            phi, phid, phidd = self.phi, 0.0, 0.0
        return p, v, acc, phi, phid, phidd

    def __call__(self, t, tau):
        p, v, acc, phi, phid, phidd = self._task(tau)
        q = planar_ik(p, self.lengths, self.elbow, phi, self.base)
        J = planar_jacobian(q, self.lengths)
        qd = np.linalg.solve(J, np.array([v[0], v[1], phid]))
        Jd = planar_jacobian_dot(q, qd, self.lengths)
        qdd = np.linalg.solve(J, np.array([acc[0], acc[1], phidd]) - Jd @ qd)
        return q, qd, qdd


class Blend:
    """Quintic joint-space transfer matching position, velocity and acceleration at both ends."""

    def __init__(self, start, end, duration):
        self.T = float(duration)
        if not self.T > 0:
            raise ValueError("blend duration must be positive")
        q0, v0, a0 = (np.asarray(x, dtype=float) for x in start)
        q1, v1, a1 = (np.asarray(x, dtype=float) for x in end)
        T = self.T
        # c0..c2 from the start state; c3..c5 from the end state
        M = np.array([[T**3, T**4, T**5],
                      [3 * T**2, 4 * T**3, 5 * T**4],
                      [6 * T, 12 * T**2, 20 * T**3]])
        rhs = np.stack([q1 - q0 - v0 * T - 0.5 * a0 * T * T,
                        v1 - v0 - a0 * T,
                        a1 - a0])
        c345 = np.linalg.solve(M, rhs)
        self.c = np.vstack([q0, v0, 0.5 * a0, c345])

    def __call__(self, t, tau):
        s = min(max(tau, 0.0), self.T)
        c = self.c
        p = [s**k for k in range(6)]
        q = sum(c[k] * p[k] for k in range(6))
        qd = sum(k * c[k] * p[k - 1] for k in range(1, 6))
        qdd = sum(k * (k - 1) * c[k] * p[k - 2] for k in range(2, 6))
        return q, qd, qdd

    def point(self, t, tau):
        return None


@dataclass(frozen=True)
class Segment:
    duration: float
    generator: object


@dataclass(frozen=True)
class ReferenceSample:
    segment: int
    q_d: np.ndarray
    qd_dot: np.ndarray
    qd_ddot: np.ndarray
    point: object = None


class TrajectoryProgram:
    """Consecutive segments; time past the last segment stays on the last generator."""

    def __init__(self, segments):
        if not segments:
            raise ValueError("a program needs at least one segment")
        for s in segments:
            if not s.duration > 0:
                raise ValueError("segment durations must be positive")
        self.segments = list(segments)
        self.starts = np.concatenate([[0.0], np.cumsum([s.duration for s in segments])[:-1]])

    @property
    def duration(self):
        return float(self.starts[-1] + self.segments[-1].duration)

    def segment_index(self, t):
        # small slack so tick times like k*dt land on the intended side of a boundary
        return int(np.searchsorted(self.starts, t + 1e-9, side="right") - 1)

    def sample(self, t):
        i = max(self.segment_index(t), 0)
        gen = self.segments[i].generator
        tau = t - self.starts[i]
        q, qd, qdd = gen(t, tau)
        return ReferenceSample(i, q, qd, qdd, gen.point(t, tau))

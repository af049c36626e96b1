"""Euler-Lagrange plants, fixed-step integration and numerical differentiation.

The closed loop only ever sees ``q`` and ``qdot``; everything else here
(inertia, bias forces, true accelerations) is simulator-side truth that tests
and diagnostics may consult.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _backend
from .errors import IntegrationBlowupError, SingularPlantError

COND_LIMIT = 1e12
GRAVITY = 9.81


@dataclass(frozen=True)
class PlantState:
    t: float
    q: np.ndarray
    qdot: np.ndarray

    @classmethod
    def zeros(cls, n, t=0.0):
        return cls(t, np.zeros(n), np.zeros(n))

    def is_finite(self):
        return bool(np.isfinite(self.t) and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot)))


class PlantModel:
    """Generic ``M(q) qdd + N(q, qd) + F(qd) = tau + d(t)`` plant.

    Subclasses provide ``inertia``, ``coriolis_gravity`` and ``friction``;
    ``disturbance`` is an optional external generalized force.
    """

    n = 0
    link_lengths = ()
    link_masses = ()
    payload_mass = 0.0

    def inertia(self, q):
        raise NotImplementedError

    def coriolis_gravity(self, q, qdot):
        raise NotImplementedError

    def friction(self, qdot):
        return np.zeros(self.n)

    def disturbance(self, t):
        return np.zeros(self.n)

    def accel(self, t, q, qdot, tau):
        M = self.inertia(q)
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularPlantError(f"inertia matrix is singular (cond={cond:.3g})",
                                     dump={"q": list(map(float, q))})
        rhs = np.asarray(tau, dtype=float) + self.disturbance(t) - self.coriolis_gravity(q, qdot) - self.friction(qdot)
        return cho_solve(cho_factor(M), rhs)


class PlanarArm(PlantModel):
    """Serial planar arm with uniform-rod links moving in the vertical plane.

    Gravity points along -y. A payload is a point mass at the end effector.
    ``armature`` adds reflected actuator inertia on the diagonal of M.
    """

    def __init__(self, link_lengths=(0.3, 0.24, 0.34), link_masses=(2.0, 1.5, 1.0),
                 viscous=(0.5, 0.5, 0.5), payload_mass=0.0, armature=0.02,
                 gravity=GRAVITY, base=(0.0, 0.0)):
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        self.link_masses = np.asarray(link_masses, dtype=float)
        self.n = len(self.link_lengths)
        self.viscous = np.broadcast_to(np.asarray(viscous, dtype=float), (self.n,)).copy()
        self.armature = np.broadcast_to(np.asarray(armature, dtype=float), (self.n,)).copy()
        self.payload_mass = float(payload_mass)
        self.gravity = float(gravity)
        self.base = np.asarray(base, dtype=float)
        if len(self.link_masses) != self.n:
            raise ValueError("link_lengths and link_masses differ in length")
        if np.any(self.link_lengths <= 0) or np.any(self.link_masses < 0) or self.payload_mass < 0:
            raise ValueError("lengths must be positive and masses non-negative")
        L = self.link_lengths
        self._blink = np.concatenate([np.arange(self.n), [self.n - 1]]).astype(np.int64)
        self._bmass = np.concatenate([self.link_masses, [self.payload_mass]])
        self._bcom = np.concatenate([L / 2.0, [L[-1]]])
        self._binertia = np.concatenate([self.link_masses * L**2 / 12.0, [0.0]])
        self._qdd = np.empty(self.n)

    def mass_bias(self, q, qdot):
        M = np.empty((self.n, self.n))
        N = np.empty(self.n)
        _backend.kernels.chain_mass_bias(np.ascontiguousarray(q, dtype=float),
                                         np.ascontiguousarray(qdot, dtype=float),
                                         self.link_lengths, self._blink, self._bmass, self._bcom,
                                         self._binertia, self.armature, self.gravity, M, N)
        return M, N

    def inertia(self, q):
        return self.mass_bias(q, np.zeros(self.n))[0]

    def coriolis_gravity(self, q, qdot):
        return self.mass_bias(q, qdot)[1]

    def friction(self, qdot):
        return self.viscous * qdot

    def accel(self, t, q, qdot, tau):
        out = np.empty(self.n)
        status = _backend.kernels.chain_accel(np.ascontiguousarray(q, dtype=float),
                                              np.ascontiguousarray(qdot, dtype=float),
                                              np.ascontiguousarray(tau, dtype=float),
                                              self.link_lengths, self._blink, self._bmass,
                                              self._bcom, self._binertia, self.armature,
                                              self.gravity, self.viscous, out)
        if status:
            raise SingularPlantError("inertia matrix is singular", dump={"q": list(map(float, q))})
        return out

    def fk(self, q):
        """End-effector position in the task frame (base offset included)."""
        th = np.cumsum(q, axis=-1)
        x = self.base[0] + np.sum(self.link_lengths * np.cos(th), axis=-1)
        y = self.base[1] + np.sum(self.link_lengths * np.sin(th), axis=-1)
        return np.stack([x, y], axis=-1)

    def energy(self, q, qdot):
        """Kinetic plus gravitational potential energy."""
        M = self.inertia(q)
        th = np.cumsum(q)
        L = self.link_lengths
        ys = np.cumsum(L * np.sin(th)) - L * np.sin(th) + self._bcom[:-1] * np.sin(th)
        y_tip = np.sum(L * np.sin(th))
        V = self.gravity * (np.dot(self.link_masses, ys) + self.payload_mass * y_tip)
        return 0.5 * qdot @ M @ qdot + V


class Pendulum(PlantModel):
    """Point-mass pendulum, angle measured from the downward vertical."""

    def __init__(self, mass=1.0, length=1.0, gravity=GRAVITY, viscous=0.0):
        self.n = 1
        self.mass, self.length, self.gravity, self.viscous = mass, length, gravity, viscous
        self.link_lengths = np.array([length])
        self.link_masses = np.array([mass])

    def inertia(self, q):
        return np.array([[self.mass * self.length**2]])

    def coriolis_gravity(self, q, qdot):
        return np.array([self.mass * self.gravity * self.length * np.sin(q[0])])

    def friction(self, qdot):
        return self.viscous * np.asarray(qdot, dtype=float)


class LinearJointPlant(PlantModel):
    """Decoupled linear joints ``qdd = a1 q + a2 qd + g u + dist(t)``.

    ``dist(t) = amplitude * sin(frequency * t + phase)`` per joint. Used as the
    oracle plant for time-delay estimation checks: f and g are known exactly.
    """

    def __init__(self, a1=0.0, a2=0.0, g=1.0, amplitude=0.0, frequency=0.0, phase=0.0, n=1):
        self.n = n
        vec = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
        self.a1, self.a2, self.g = vec(a1), vec(a2), vec(g)
        self.amplitude, self.frequency, self.phase = vec(amplitude), vec(frequency), vec(phase)
        if np.any(self.g <= 0):
            raise ValueError("input gain g must be positive")
        self.link_lengths = np.ones(n)
        self.link_masses = 1.0 / self.g

    def inertia(self, q):
        return np.diag(1.0 / self.g)

    def coriolis_gravity(self, q, qdot):
        return -(self.a1 * q + self.a2 * qdot) / self.g

    def disturbance(self, t):
        return self.amplitude * np.sin(self.frequency * t + self.phase) / self.g

    def accel(self, t, q, qdot, tau):
        return (self.a1 * q + self.a2 * qdot + self.g * np.asarray(tau, dtype=float)
                + self.amplitude * np.sin(self.frequency * t + self.phase))

    def drift(self, t, q, qdot):
        """The input-free part f of ``qdd = f + g u``."""
        return self.a1 * q + self.a2 * qdot + self.amplitude * np.sin(self.frequency * t + self.phase)


def forward_accel(model, state, tau):
    """``qdd = M(q)^-1 (tau - N(q, qd) - F(qd))`` via Cholesky, never an explicit inverse."""
    return model.accel(state.t, state.q, state.qdot, tau)


def euler_step(model, state, tau, dt, qdd=None):
    """Explicit Euler step. ``qdd`` may be passed when already evaluated at ``state``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if qdd is None:
        qdd = forward_accel(model, state, tau)
    nxt = PlantState(state.t + dt, state.q + dt * state.qdot, state.qdot + dt * qdd)
    if not nxt.is_finite():
        raise IntegrationBlowupError("non-finite plant state after Euler step",
                                     dump={"t": state.t, "q": state.q.tolist(), "qdot": state.qdot.tolist()})
    return nxt


def rk4_step(model, state, tau, dt):
    """Classical Runge-Kutta step with torque held constant; for building oracles only."""
    def f(t, q, v):
        return v, model.accel(t, q, v, tau)

    t, q, v = state.t, state.q, state.qdot
    k1q, k1v = f(t, q, v)
    k2q, k2v = f(t + dt / 2, q + dt / 2 * k1q, v + dt / 2 * k1v)
    k3q, k3v = f(t + dt / 2, q + dt / 2 * k2q, v + dt / 2 * k2v)
    k4q, k4v = f(t + dt, q + dt * k3q, v + dt * k3v)
    return replace(state, t=t + dt,
                   q=q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q),
                   qdot=v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


class DiffEstimator:
    """Backward-difference differentiator for a scalar or vector signal."""

    def __init__(self, step):
        if not step > 0:
            raise ValueError("step must be positive")
        self.step = float(step)
        self.previous = None

    @property
    def ready(self):
        return self.previous is not None

    def reset(self):
        self.previous = None


def numeric_derivative(est, sample):
    """(sample - previous) / step; the first call returns zero."""
    sample = np.array(sample, dtype=float) if np.ndim(sample) else float(sample)
    if est.previous is None:
        out = np.zeros_like(sample) if np.ndim(sample) else 0.0
    else:
        out = (sample - est.previous) / est.step
    est.previous = sample
    return out


def inertia_bounds(model, samples=2000, seed=0):
    """Sampled bounds over the joint workspace.

    Returns ``(eig_lo, eig_hi, diag_lo, diag_hi)``; the diagonal bounds are the
    per-joint ``m_lower``/``m_upper`` used by the ``gbar`` guideline.
    """
    rng = np.random.default_rng(seed)
    qs = rng.uniform(-np.pi, np.pi, size=(samples, model.n))
    # include the straight and folded postures explicitly
    qs = np.vstack([np.zeros(model.n), np.full(model.n, np.pi), qs])
    eig_lo, eig_hi = np.inf, 0.0
    d_lo = np.full(model.n, np.inf)
    d_hi = np.zeros(model.n)
    for q in qs:
        M = model.inertia(q)
        ev = np.linalg.eigvalsh(M)
        eig_lo, eig_hi = min(eig_lo, ev[0]), max(eig_hi, ev[-1])
        d = np.diag(M)
        d_lo, d_hi = np.minimum(d_lo, d), np.maximum(d_hi, d)
    return float(eig_lo), float(eig_hi), d_lo, d_hi

"""Incremental control split for one joint.

The torque increment is ``du = du_f + du_b``: ``du_f`` inverts the incremental
dynamics so the tracking error obeys ``e' = A e + B du_b + B xi``, and
``du_b`` is the tanh-saturated approximate-optimal policy.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import PenaltyDomainError

# reward evaluation for logging clamps |du| to this fraction of beta
LOG_CLAMP = 0.999999


@dataclass(frozen=True)
class ErrorSubsystem:
    k1: float
    k2: float
    gbar: float

    @property
    def A(self):
        return np.array([[0.0, 1.0], [-self.k1, -self.k2]])

    @property
    def B(self):
        return np.array([0.0, self.gbar])

    def drift(self, e1, e2, du_b=0.0):
        """``A e + B du_b`` for scalar error components."""
        return e2, -self.k1 * e1 - self.k2 * e2 + self.gbar * du_b


@dataclass(frozen=True)
class ReferencePoint:
    q_d: float
    qd_dot: float
    qd_ddot: float


@dataclass(frozen=True)
class SaturatedPolicy:
    beta: float
    c_bar: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.c_bar < 0:
            raise ValueError("c_bar must be non-negative")

    @property
    def margin(self):
        """Guaranteed gap between |du_b| and beta."""
        return max(1e-12, 1e-11 * self.beta)


def feedforward(sub, ref, e, xdot2_0):
    """Incremental dynamic inversion ``(xr'' - xdot2_0 - k1 e1 - k2 e2) / gbar``."""
    return (ref.qd_ddot - xdot2_0 - sub.k1 * e[0] - sub.k2 * e[1]) / sub.gbar


def penalty_W(pol, du):
    """Closed form of ``2 int_0^du beta artanh(v / beta) dv``.

    Equals ``2 beta du artanh(du/beta) + beta^2 ln(1 - du^2/beta^2)``; even,
    non-negative, zero at zero. Defined only for ``|du| < beta``.
    """
    b = pol.beta
    if np.ndim(du) == 0:
        du = float(du)
        if not abs(du) < b:
            raise PenaltyDomainError(f"|du|={abs(du)} is not below beta={b}")
        x = du / b
        return 2.0 * b * du * math.atanh(x) + b * b * math.log1p(-x * x)
    du = np.asarray(du, dtype=float)
    if not np.all(np.abs(du) < b):
        raise PenaltyDomainError(f"max |du|={np.max(np.abs(du))} is not below beta={b}")
    x = du / b
    return 2.0 * b * du * np.arctanh(x) + b * b * np.log1p(-x * x)


def reward(pol, Q, e, du_b, clamp=False):
    """``e'Qe + W(du_b) + (c_bar |du_b|)^2``.

    ``clamp=True`` limits ``|du_b|`` to ``LOG_CLAMP * beta`` first; only for
    logging externally supplied increments.
    """
    if clamp:
        lim = LOG_CLAMP * pol.beta
        du_b = min(max(du_b, -lim), lim)
    e1, e2 = float(e[0]), float(e[1])
    quad = Q[0][0] * e1 * e1 + (Q[0][1] + Q[1][0]) * e1 * e2 + Q[1][1] * e2 * e2
    return quad + penalty_W(pol, du_b) + (pol.c_bar * du_b) ** 2


def policy(pol, sub, grad_phi_w):
    """``-beta tanh(B' grad / (2 beta))`` with ``grad = dPhi(e)' W``.

    Accepts a single 2-vector or a stack of shape ``(..., 2)``. The output is
    kept at least ``pol.margin`` inside the saturation level.
    """
    b = pol.beta
    lim = b - pol.margin
    g = np.asarray(grad_phi_w, dtype=float)
    if g.ndim == 1:
        out = -b * math.tanh(sub.gbar * g[1] / (2.0 * b))
        return min(max(out, -lim), lim)
    out = -b * np.tanh(sub.gbar * g[..., 1] / (2.0 * b))
    return np.clip(out, -lim, lim)


def hamiltonian(pol, sub, Q, e, du_b, gradV, r=None):
    """``r(e, du_b) + gradV' (A e + B du_b)``; ``r`` may be supplied directly."""
    if r is None:
        r = reward(pol, Q, e, du_b)
    d1, d2 = sub.drift(e[0], e[1], du_b)
    return r + gradV[0] * d1 + gradV[1] * d2


def assemble_torque(u_prev, du_f, du_b, clamp=None):
    """``u_prev + du_f + du_b``, optionally clipped to ``[-clamp, clamp]``."""
    u = u_prev + du_f + du_b
    if clamp is not None:
        u = min(max(u, -clamp), clamp)
    return u


@dataclass(frozen=True)
class GainReport:
    passed: bool
    eigenvalues: tuple
    message: str


def validate_gains(k1, k2):
    """Require ``k1 > 1`` and ``k2 > 1/2``; also reports the eigenvalues of A."""
    ev = tuple(np.roots([1.0, k2, k1]).astype(complex))
    problems = []
    if not k1 > 1:
        problems.append(f"k1={k1} must exceed 1")
    if not k2 > 0.5:
        problems.append(f"k2={k2} must exceed 1/2")
    return GainReport(not problems, ev, "; ".join(problems) or "ok")

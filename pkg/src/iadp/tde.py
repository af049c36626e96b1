"""Time-delay estimation of the lumped unknown joint dynamics.

Each joint ``i`` is rewritten as ``qdd_i / gbar_i = h_i + u_i``; ``h_i`` is
estimated from the previous tick's measured acceleration and applied torque.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import GuidelineViolation


@dataclass
class SubsystemView:
    """Per-joint view of the plant state; f and g stay latent."""

    index: int
    x1: float
    x2: float
    xdot2: float
    u: float


@dataclass
class TdeChannel:
    """One joint's delay line: a single-period memory of (xdot_2, u)."""

    gbar: float
    delay: float
    xdot2_0: float = 0.0
    u_0: float = 0.0
    primed: bool = False

    def __post_init__(self):
        if not self.gbar > 0:
            raise ValueError("gbar must be positive")
        if not self.delay > 0:
            raise ValueError("delay must be positive")

    def push(self, xdot2, u):
        """Store the sample that becomes the delayed pair one period later."""
        self.xdot2_0 = float(xdot2)
        self.u_0 = float(u)
        self.primed = True

    @property
    def warming_up(self):
        return not self.primed


def estimate_h(ch):
    """``h_hat = xdot2_0 / gbar - u_0``; zero while the delay line is empty."""
    if not ch.primed:
        return 0.0
    return ch.xdot2_0 / ch.gbar - ch.u_0


def tde_error(ch, true_h):
    return true_h - estimate_h(ch)


def true_h(gbar, qdd, u):
    """Lumped term from simulator truth: ``h = qdd / gbar - u``."""
    return qdd / gbar - u


def validate_gbar(gbar, m_lower):
    """Check ``gbar > 1 / (2 m_lower)``. Returns ``(passed, margin)``."""
    if not m_lower > 0:
        raise ValueError("m_lower must be positive")
    margin = gbar - 1.0 / (2.0 * m_lower)
    return margin > 0, margin


@dataclass
class TdeErrorMonitor:
    """Discrete-time bound on the estimation error of one joint.

    With ``iota`` the contraction factor and ``delta1_bar``/``delta2_bar`` the
    disturbance bounds, ``|xi(k)| <= iota^k |xi(0)| + (d1 + iota d2)/(1 - iota)
    + 2 iota beta / (1 - iota)``. Constants can be set directly or fitted from
    an oracle record (see ``record``/``fit``).
    """

    iota: float = None
    delta1_bar: float = None
    delta2_bar: float = None
    xi0: float = None
    xi_trace: list = field(default_factory=list)
    xi_bar: float = 0.0
    _g: list = field(default_factory=list, repr=False)
    _f: list = field(default_factory=list, repr=False)
    _mu: list = field(default_factory=list, repr=False)
    _u: list = field(default_factory=list, repr=False)

    def observe(self, xi):
        """Append an empirical error sample and update the running bound."""
        xi = float(xi)
        if not self.xi_trace:
            self.xi0 = xi
        self.xi_trace.append(xi)
        self.xi_bar = max(self.xi_bar, abs(xi))

    def record(self, xi, g, f, mu, u):
        """Oracle sample at one tick: true input gain g, drift f, PD target mu, torque u."""
        self.observe(xi)
        self._g.append(float(g))
        self._f.append(float(f))
        self._mu.append(float(mu))
        self._u.append(float(u))

    @property
    def evaluable(self):
        return None not in (self.iota, self.delta1_bar, self.delta2_bar)

    def fit(self, gbar):
        """Fit iota, delta1_bar, delta2_bar from the oracle record."""
        if len(self._g) < 2:
            raise ValueError("need at least two oracle samples to fit the monitor")
        g = np.asarray(self._g)
        f = np.asarray(self._f)
        mu = np.asarray(self._mu)
        u = np.asarray(self._u)
        iota_k = 1.0 - g / gbar
        self.iota = float(np.max(np.abs(iota_k)))
        d1 = (np.diff(g) * u[:-1] + np.diff(f)) / gbar
        d2 = iota_k[1:] * (mu[:-1] - mu[1:]) / gbar
        self.delta1_bar = float(np.max(np.abs(d1)))
        self.delta2_bar = float(np.max(np.abs(d2)) / self.iota) if self.iota > 0 else 0.0
        return self

    def bound_series(self, beta, steps):
        return np.array([xi_bound(self, beta, k) for k in range(steps)])


def xi_bound(mon, beta, k):
    """Bound on ``|xi|`` at step ``k``; non-increasing in ``k``."""
    iota = mon.iota
    if iota is None or mon.delta1_bar is None or mon.delta2_bar is None:
        raise ValueError("monitor constants are not evaluable")
    if not 0 <= iota < 1:
        raise GuidelineViolation(f"contraction factor iota={iota} is not below one")
    if not beta > 0:
        raise ValueError("beta must be positive")
    xi0 = abs(mon.xi0 or 0.0)
    return xi0 * iota**k + (mon.delta1_bar + iota * mon.delta2_bar) / (1 - iota) + 2 * iota * beta / (1 - iota)


def xi_bound_limit(mon, beta):
    iota = mon.iota
    if not 0 <= iota < 1:
        raise GuidelineViolation(f"contraction factor iota={iota} is not below one")
    return (mon.delta1_bar + iota * mon.delta2_bar) / (1 - iota) + 2 * iota * beta / (1 - iota)

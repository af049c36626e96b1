"""Per-joint critic: polynomial features, LIP regressand, experience buffer and
the concurrent-learning weight law.

The value is approximated as ``V = W' Phi(e)``. Along the error dynamics the
HJB consistency condition is linear in the weights, ``Theta = -W' Y + eps``
with ``Theta = r(e, du_b)`` and ``Y = dPhi(e) (A e + B du_b)``, so the critic
is trained as a parameter-identification problem on realtime and stored data.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .control import reward
from .errors import LearnerDivergenceError

N_FEATURES = 4


def phi(e):
    """``[e1^2, e2^2, e1 e2, e2^3]``."""
    e1, e2 = float(e[0]), float(e[1])
    return np.array([e1 * e1, e2 * e2, e1 * e2, e2 * e2 * e2])


def grad_phi(e):
    """4x2 Jacobian of ``phi``."""
    e1, e2 = float(e[0]), float(e[1])
    return np.array([[2.0 * e1, 0.0],
                     [0.0, 2.0 * e2],
                     [e2, e1],
                     [0.0, 3.0 * e2 * e2]])


def grad_phi_w(e, W):
    """``dPhi(e)' W``, the value gradient fed to the policy."""
    e1, e2 = float(e[0]), float(e[1])
    return np.array([2.0 * e1 * W[0] + e2 * W[2],
                     2.0 * e2 * W[1] + e1 * W[2] + 3.0 * e2 * e2 * W[3]])


class Features:
    """The fixed 4-term polynomial basis; kept as an object so callers can swap it."""

    N = N_FEATURES

    phi = staticmethod(phi)
    grad_phi = staticmethod(grad_phi)
    grad_phi_w = staticmethod(grad_phi_w)

    def project(self, e, d):
        """``dPhi(e) d`` without forming the Jacobian."""
        e1, e2 = float(e[0]), float(e[1])
        d1, d2 = d
        return np.array([2.0 * e1 * d1, 2.0 * e2 * d2, e2 * d1 + e1 * d2, 3.0 * e2 * e2 * d2])


FEATURES = Features()


@dataclass(frozen=True)
class Regressand:
    theta: float
    Y: np.ndarray

    def is_finite(self):
        return bool(np.isfinite(self.theta) and np.all(np.isfinite(self.Y)))


def make_regressand(features, sub, pol, Q, e, du_b):
    """``Theta = r(e, du_b)`` and ``Y = dPhi(e) (A e + B du_b)`` from one snapshot."""
    theta = reward(pol, Q, e, du_b)
    Y = features.project(e, sub.drift(e[0], e[1], du_b))
    return Regressand(float(theta), Y)


class ExperienceBuffer:
    """Fixed-capacity store of ``(Y, Theta)`` pairs.

    ``policy="sigma_min"`` appends until full, then swaps in a new sample only
    if some replacement strictly raises the smallest singular value of the
    stacked ``Y`` matrix. ``policy="fifo"`` overwrites the oldest entry.
    """

    POLICIES = ("sigma_min", "fifo")

    def __init__(self, capacity, n_features=N_FEATURES, policy="sigma_min"):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        if policy not in self.POLICIES:
            raise ValueError(f"unknown admission policy {policy!r}")
        self.capacity = int(capacity)
        self.n_features = int(n_features)
        self.policy = policy
        # at least one row so compiled kernels always see a valid memoryview
        self.Y = np.zeros((max(self.capacity, 1), self.n_features))
        self.theta = np.zeros(max(self.capacity, 1))
        self.count = 0
        self.pointer = 0
        self._report = (0, 0.0)

    def __len__(self):
        return self.count

    @property
    def full(self):
        return self.count >= self.capacity

    def entries(self):
        return [(self.Y[i].copy(), float(self.theta[i])) for i in range(self.count)]

    def _store(self, idx, sample):
        self.Y[idx] = sample.Y
        self.theta[idx] = sample.theta
        self._report = None

    def admit(self, sample):
        """Offer a sample; returns True if it was stored."""
        if self.capacity == 0:
            return False
        if not self.full:
            self._store(self.count, sample)
            self.count += 1
            self.pointer = self.count % self.capacity
            return True
        if self.policy == "fifo":
            self._store(self.pointer, sample)
            self.pointer = (self.pointer + 1) % self.capacity
            return True
        y = np.ascontiguousarray(sample.Y, dtype=float)
        idx, best, current = _backend.kernels.best_replacement(self.Y, self.count, y)
        # relative margin keeps round-off from swapping equivalent entries
        if best > current * (1.0 + 1e-12) and best > 0.0:
            self._store(idx, sample)
            return True
        return False

    def rank_report(self):
        """``(rank, sigma_min)`` of the stacked regressors.

        ``sigma_min`` is the ``n_features``-th singular value, zero while the
        stack cannot span the feature space.
        """
        if self._report is None:
            self._report = rank_report(self.Y[: self.count], self.n_features)
        return self._report

    def to_dict(self):
        return {"capacity": self.capacity, "n_features": self.n_features, "policy": self.policy,
                "count": self.count, "pointer": self.pointer,
                "Y": self.Y[: self.count].tolist(), "theta": self.theta[: self.count].tolist()}

    @classmethod
    def from_dict(cls, d):
        buf = cls(d["capacity"], d.get("n_features", N_FEATURES), d.get("policy", "sigma_min"))
        count = int(d["count"])
        if count > buf.capacity or len(d["Y"]) != count or len(d["theta"]) != count:
            raise ValueError("buffer snapshot is inconsistent")
        if count:
            buf.Y[:count] = np.asarray(d["Y"], dtype=float).reshape(count, buf.n_features)
            buf.theta[:count] = d["theta"]
        buf.count = count
        buf.pointer = int(d["pointer"])
        buf._report = None
        return buf


def rank_report(Ys, n_features=N_FEATURES):
    """Numerical rank with tolerance ``s_max * max(dims) * eps * 64``."""
    Ys = np.asarray(Ys, dtype=float)
    if Ys.size == 0:
        return 0, 0.0
    s = np.linalg.svd(Ys, compute_uv=False)
    tol = s[0] * max(Ys.shape) * np.finfo(float).eps * 64
    rank = int(np.sum(s > tol))
    sigma_min = float(s[n_features - 1]) if len(s) >= n_features else 0.0
    return rank, sigma_min


class CriticState:
    """Weights and learning gains of one joint's critic."""

    def __init__(self, W_hat=None, Gamma=None, k_t=0.2, k_e=0.01, n_features=N_FEATURES):
        self.W_hat = np.zeros(n_features) if W_hat is None else np.array(W_hat, dtype=float)
        G = np.eye(n_features) if Gamma is None else np.array(Gamma, dtype=float)
        if G.ndim == 1:
            G = np.diag(G)
        if G.shape != (n_features, n_features) or not np.allclose(G, G.T, rtol=0, atol=1e-12 * np.abs(G).max()):
            raise ValueError("Gamma must be a symmetric matrix matching the feature count")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise ValueError("Gamma must be positive definite") from None
        self.Gamma = np.ascontiguousarray(G)
        if k_t < 0 or k_e < 0:
            raise ValueError("k_t and k_e must be non-negative")
        self.k_t = float(k_t)
        self.k_e = float(k_e)

    def theta_tilde(self, sample):
        """``Theta - Theta_hat`` with ``Theta_hat = -W' Y``."""
        return sample.theta + float(self.W_hat @ sample.Y)


def weight_step(critic, realtime, buffer, dt, k_t=None, k_e=None):
    """Forward-Euler step of the weight law; ``realtime=None`` withholds the live term.

    ``k_t``/``k_e`` override the critic's gains for this step only.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    kt = critic.k_t if k_t is None else k_t
    ke = critic.k_e if k_e is None else k_e
    n = len(critic.W_hat)
    if realtime is None:
        Y, theta, kt = np.zeros(n), 0.0, 0.0
    else:
        Y, theta = np.ascontiguousarray(realtime.Y, dtype=float), float(realtime.theta)
    count = 0 if buffer is None else buffer.count
    bufY = buffer.Y if buffer is not None else np.zeros((1, n))
    bufT = buffer.theta if buffer is not None else np.zeros(1)
    out = np.empty(n)
    _backend.kernels.critic_update(critic.W_hat, critic.Gamma, kt, ke, Y, theta, bufY, bufT, count, dt, out)
    if not np.all(np.isfinite(out)):
        raise LearnerDivergenceError("critic weights became non-finite",
                                     dump={"W_hat": critic.W_hat.tolist(), "Y": Y.tolist(), "theta": theta})
    critic.W_hat = out
    return critic


def value_estimate(critic, features, e):
    return float(critic.W_hat @ features.phi(e))

"""Pure-Python/numpy implementations of the hot kernels.

Signatures mirror ``_core.pyx`` exactly; the backend selector picks one of the
two at import time.
"""
import numpy as np

NAME = "python"

# condition number above which the inertia matrix is treated as singular
COND_LIMIT = 1e12


def chain_mass_bias(q, qd, lengths, blink, bmass, bcom, binertia, armature, gravity, M, N):
    """Fill ``M`` and ``N`` (= C(q, qd) qd + G(q)) for a planar serial chain.

    Each body sits on link ``blink[b]`` at distance ``bcom[b]`` from that
    link's proximal joint. Gravity acts along -y of the base frame.
    ``armature`` is added to the diagonal of M.
    """
    n = q.shape[0]
    th = np.cumsum(q)
    thd = np.cumsum(qd)
    c = np.cos(th)
    s = np.sin(th)
    M[:, :] = np.diag(armature)
    N[:] = 0.0
    for b in range(blink.shape[0]):
        j = int(blink[b])
        m = bmass[b]
        lever = lengths.copy()
        lever[j] = bcom[b]
        lever[j + 1:] = 0.0
        # columns of the translational Jacobian: sum over links k >= i of lever_k e_perp(th_k)
        px = np.cumsum((-lever * s)[::-1])[::-1]
        py = np.cumsum((lever * c)[::-1])[::-1]
        J = np.vstack((px, py))
        J[:, j + 1:] = 0.0
        ab = -np.array([np.dot(lever * c, thd * thd), np.dot(lever * s, thd * thd)])
        ab[1] += gravity
        M += m * (J.T @ J)
        Jw = np.zeros(n)
        Jw[: j + 1] = 1.0
        M += binertia[b] * np.outer(Jw, Jw)
        N += m * (J.T @ ab)


def sym_eigvals(A):
    return np.linalg.eigvalsh(A)


def chain_accel(q, qd, tau, lengths, blink, bmass, bcom, binertia, armature, gravity, viscous, out):
    """Forward dynamics of the planar chain. Returns 0 on success, 1 if singular."""
    n = q.shape[0]
    M = np.empty((n, n))
    N = np.empty(n)
    chain_mass_bias(q, qd, lengths, blink, bmass, bcom, binertia, armature, gravity, M, N)
    rhs = tau - N - viscous * qd
    return solve_spd(M, rhs, out)


def solve_spd(M, rhs, out):
    ev = np.linalg.eigvalsh(M)
    if not ev[0] > 0.0 or ev[-1] / ev[0] > COND_LIMIT:
        out[:] = np.nan
        return 1
    L = np.linalg.cholesky(M)
    y = np.linalg.solve(L, rhs)
    out[:] = np.linalg.solve(L.T, y)
    return 0


def critic_update(W, Gamma, kt, ke, Y, theta, bufY, bufTheta, count, dt, out):
    """One forward-Euler step of the concurrent critic weight law.

    The residual uses Theta_hat = -W.Y, so Theta_tilde = Theta + W.Y.
    """
    g = kt * Y * (theta + W @ Y)
    if count > 0:
        By = bufY[:count]
        g = g + ke * (By.T @ (bufTheta[:count] + By @ W))
    out[:] = W - dt * (Gamma @ g)


def _gram_min_eig(Ys):
    # Ys: (..., P, N) stacks; smallest eigenvalue of the smaller Gram matrix
    if Ys.shape[-2] >= Ys.shape[-1]:
        G = np.swapaxes(Ys, -1, -2) @ Ys
    else:
        G = Ys @ np.swapaxes(Ys, -1, -2)
    return np.maximum(np.linalg.eigvalsh(G)[..., 0], 0.0)


def best_replacement(bufY, count, y):
    """Score replacing each stored regressor with ``y``.

    Returns ``(index, best, current)`` where ``best`` and ``current`` are the
    squared minimum singular values of the candidate and current stacks.
    """
    B = np.asarray(bufY[:count])
    current = float(_gram_min_eig(B))
    cands = np.repeat(B[None, :, :], count, axis=0)
    idx = np.arange(count)
    cands[idx, idx, :] = y
    scores = _gram_min_eig(cands)
    best = int(np.argmax(scores))
    return best, float(scores[best]), current

import functools

import numpy as np
import pytest

from iadp import _backend

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = {}


def report_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])


@pytest.fixture(params=sorted(_backend.AVAILABLE))
def backend(request):
    """Run a test once per available kernel backend."""
    prev = _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(prev)


@functools.lru_cache(maxsize=None)
def lagrangian_arm(lengths, masses, payload, armature, gravity, viscous):
    """Forward dynamics of a planar rod chain derived symbolically from its Lagrangian.

    Returns a callable ``(q, qd, tau) -> qdd``. Written independently of the
    package kernels: positions are built link by link and differentiated.
    """
    import sympy as sp

    n = len(lengths)
    q = sp.symbols(f"q0:{n}")
    qd = sp.symbols(f"qd0:{n}")
    th = [sum(q[: j + 1]) for j in range(n)]
    T = 0
    V = 0
    x_prev, y_prev = sp.Integer(0), sp.Integer(0)
    for j in range(n):
        L, m = lengths[j], masses[j]
        xc = x_prev + sp.Rational(1, 2) * L * sp.cos(th[j])
        yc = y_prev + sp.Rational(1, 2) * L * sp.sin(th[j])
        vx = sum(sp.diff(xc, q[k]) * qd[k] for k in range(n))
        vy = sum(sp.diff(yc, q[k]) * qd[k] for k in range(n))
        w = sum(qd[: j + 1])
        T += sp.Rational(1, 2) * m * (vx**2 + vy**2) + sp.Rational(1, 2) * (m * L**2 / 12) * w**2
        V += m * gravity * yc
        x_prev = x_prev + L * sp.cos(th[j])
        y_prev = y_prev + L * sp.sin(th[j])
    vx = sum(sp.diff(x_prev, q[k]) * qd[k] for k in range(n))
    vy = sum(sp.diff(y_prev, q[k]) * qd[k] for k in range(n))
    T += sp.Rational(1, 2) * payload * (vx**2 + vy**2) + payload * 0
    V += payload * gravity * y_prev
    T += sum(sp.Rational(1, 2) * armature * qd[k] ** 2 for k in range(n))
    Lag = T - V
    dLdqd = [sp.diff(Lag, v) for v in qd]
    M = sp.Matrix([[sp.diff(dLdqd[i], qd[k]) for k in range(n)] for i in range(n)])
    # d/dt dL/dqd = M qdd + sum_k d(dL/dqd)/dq_k qd_k
    bias = sp.Matrix([sum(sp.diff(dLdqd[i], q[k]) * qd[k] for k in range(n)) - sp.diff(Lag, q[i])
                      for i in range(n)])
    fM = sp.lambdify((q, qd), M, "numpy")
    fb = sp.lambdify((q, qd), bias, "numpy")
    b = np.asarray(viscous, dtype=float)

    def accel(qv, qdv, tau):
        Mv = np.array(fM(tuple(qv), tuple(qdv)), dtype=float)
        rhs = np.asarray(tau, dtype=float) - b * qdv - np.array(fb(tuple(qv), tuple(qdv)), dtype=float).ravel()
        return np.linalg.solve(Mv, rhs)

    accel.inertia = lambda qv: np.array(fM(tuple(qv), tuple(np.zeros(n))), dtype=float)
    return accel

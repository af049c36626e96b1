import math

import numpy as np
import pytest

from iadp.config import preset
from iadp.errors import IKRangeError
from iadp.trajectory import (Blend, Circle, Segment, Setpoint, Sinusoid, TrajectoryProgram, planar_fk,
                             planar_ik, planar_jacobian, planar_jacobian_dot)

L = (0.3, 0.24, 0.34)


def test_ik_straight_arm():
    np.testing.assert_allclose(planar_ik((sum(L), 0.0), L), [0.0, 0.0, 0.0], atol=1e-7)
    np.testing.assert_allclose(planar_ik((sum(L), 0.0), L, phi=0.0), [0.0, 0.0, 0.0], atol=1e-7)


def test_ik_round_trip_on_random_targets():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, 3)
        x, y, phi = planar_fk(q, L)
        qi = planar_ik((x, y), L, elbow=1 if q[1] >= 0 else -1, phi=phi)
        xi, yi, _ = planar_fk(qi, L)
        worst = max(worst, math.hypot(xi - x, yi - y))
    assert worst <= 1e-9


def test_ik_round_trip_with_radial_orientation_and_base():
    rng = np.random.default_rng(1)
    base = (0.02, -0.01)
    for _ in range(500):
        r = rng.uniform(0.4, 0.87)
        a = rng.uniform(-np.pi, np.pi)
        target = (base[0] + r * math.cos(a), base[1] + r * math.sin(a))
        q = planar_ik(target, L, base=base)
        x, y, _ = planar_fk(q, L, base)
        assert math.hypot(x - target[0], y - target[1]) <= 1e-9


def test_ik_out_of_reach():
    with pytest.raises(IKRangeError):
        planar_ik((1.0, 0.0), L)


def test_first_circle_reachable_with_preset_base():
    cfg = preset("circles")
    base = cfg["plant"]["base"]
    seg = cfg["trajectory"]["segments"][0]
    assert seg["center"] == [0.68, 0.05] and seg["radius"] == 0.2
    for a in np.linspace(0, 2 * np.pi, 721):
        p = (0.68 + 0.2 * math.cos(a), 0.05 + 0.2 * math.sin(a))
        q = planar_ik(p, L, base=base)
        x, y, _ = planar_fk(q, L, base)
        assert math.hypot(x - p[0], y - p[1]) <= 1e-9
    # from a base at the origin the far side of the circle lies beyond the arm's reach
    assert math.hypot(0.88, 0.05) > sum(L)
    with pytest.raises(IKRangeError):
        planar_ik((0.88, 0.05), L)


def test_jacobian_and_its_derivative_match_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(50):
        q, qd = rng.normal(size=3), rng.normal(size=3)
        J = planar_jacobian(q, L)
        fd = np.column_stack([(np.array(planar_fk(q + h * e, L)) - np.array(planar_fk(q - h * e, L))) / (2 * h)
                              for e in np.eye(3)])
        np.testing.assert_allclose(J, fd, atol=1e-8)
        Jd_fd = (planar_jacobian(q + h * qd, L) - planar_jacobian(q - h * qd, L)) / (2 * h)
        np.testing.assert_allclose(planar_jacobian_dot(q, qd, L), Jd_fd, atol=1e-8)


def test_sinusoid_values():
    g = Sinusoid([0.3, 0.6, 1.0])
    q, qd, qdd = g(0.0, 0.0)
    np.testing.assert_allclose(q, 0.0, atol=1e-16)
    np.testing.assert_allclose(qd, 0.0, atol=1e-16)
    np.testing.assert_allclose(qdd, 0.25 * np.array([0.3, 0.6, 1.0]), rtol=1e-15)
    q, _, _ = g(math.pi * 2, 0.0)
    np.testing.assert_allclose(q, [0.6, 1.2, 2.0], rtol=1e-15)


@pytest.mark.parametrize("center,radius,orientation", [
    ((0.68, 0.05), 0.2, "radial"),
    ((0.2, 0.0), 0.1, "tangent"),
    ((0.5, -0.2), 0.1, "fixed"),
])
def test_circle_derivatives_consistent(center, radius, orientation):
    g = Circle(center, radius, 2 * math.pi / 5, L, base=(0.02, 0.0), orientation=orientation, phi=0.0)
    h = 1e-5
    for tau in np.linspace(0.1, 4.9, 25):
        q, qd, qdd = g(tau, tau)
        qp, qdp, _ = g(tau + h, tau + h)
        qm, qdm, _ = g(tau - h, tau - h)
        dq = np.array([math.remainder(a - b, 2 * math.pi) for a, b in zip(qp, qm)]) / (2 * h)
        np.testing.assert_allclose(qd, dq, atol=1e-6)
        np.testing.assert_allclose(qdd, (qdp - qdm) / (2 * h), atol=1e-5)
        x, y, _ = planar_fk(q, L, (0.02, 0.0))
        np.testing.assert_allclose((x, y), g.point(tau, tau), atol=1e-9)


def test_circle_rejects_unknown_orientation():
    with pytest.raises(ValueError):
        Circle((0.5, 0.0), 0.1, 1.0, L, orientation="sideways")


def test_blend_matches_boundary_states():
    start = (np.array([0.0, 0.1]), np.array([0.0, 0.2]), np.array([0.0, -0.1]))
    end = (np.array([1.0, -0.5]), np.array([0.3, 0.0]), np.array([0.2, 0.4]))
    b = Blend(start, end, 2.0)
    for want, got in zip(start, b(0.0, 0.0)):
        np.testing.assert_allclose(got, want, atol=1e-14)
    for want, got in zip(end, b(2.0, 2.0)):
        np.testing.assert_allclose(got, want, atol=1e-12)
    with pytest.raises(ValueError):
        Blend(start, end, 0.0)


def test_program_segments_and_boundaries():
    prog = TrajectoryProgram([Segment(5.0, Sinusoid([0.3])), Segment(5.0, Sinusoid([0.2]))])
    assert prog.duration == 10.0
    assert prog.segment_index(4.999) == 0
    assert prog.segment_index(5000 * 1e-3) == 1
    assert prog.sample(12.0).segment == 1
    # the gain switch is a deliberate discontinuity
    a, b = prog.sample(5.0 - 1e-3).q_d, prog.sample(5.0).q_d
    assert abs(a[0] - b[0]) > 0.05
    with pytest.raises(ValueError):
        TrajectoryProgram([])
    with pytest.raises(ValueError):
        TrajectoryProgram([Segment(0.0, Setpoint([0.0]))])


@pytest.mark.parametrize("name", ["sinusoid", "circles"])
def test_reference_continuous_within_segments(name):
    from iadp.config import resolve
    from iadp.harness import build_program

    prog = build_program(resolve(preset(name)))
    dt = 1e-3
    t = np.arange(int(round(prog.duration / dt))) * dt
    samples = [prog.sample(tk) for tk in t]
    seg = np.array([s.segment for s in samples])
    q = np.array([s.q_d for s in samples])
    qd = np.array([s.qd_dot for s in samples])
    same = seg[1:] == seg[:-1]
    step = np.abs(np.diff(q, axis=0))[same]
    vmax = np.max(np.abs(qd), axis=0)
    assert np.all(step <= (vmax + 1e-6) * dt)


def test_circle_program_points_are_consistent_with_ik():
    from iadp.config import resolve
    from iadp.harness import build_program

    exp = resolve(preset("circles"))
    prog = build_program(exp)
    base = exp.plant["base"]
    for tk in np.arange(0.0, prog.duration, 0.05):
        s = prog.sample(tk)
        if s.point is None:
            continue
        x, y, _ = planar_fk(s.q_d, L, base)
        assert math.hypot(x - s.point[0], y - s.point[1]) <= 1e-9

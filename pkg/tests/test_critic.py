import numpy as np
import pytest

from iadp.control import ErrorSubsystem, SaturatedPolicy
from iadp.critic import (FEATURES, CriticState, ExperienceBuffer, Regressand, grad_phi, grad_phi_w,
                         make_regressand, phi, rank_report, value_estimate, weight_step)
from iadp.errors import LearnerDivergenceError

SUB = ErrorSubsystem(8.0, 8.0, 40.0)
POL = SaturatedPolicy(0.1, 200.0)
Q = np.diag([300.0, 40000.0])


def lip_buffer(W_star, Ys, noise=None):
    buf = ExperienceBuffer(len(Ys))
    for l, y in enumerate(Ys):
        th = -W_star @ y + (0.0 if noise is None else noise[l])
        assert buf.admit(Regressand(float(th), y))
    return buf


@pytest.mark.parametrize("e,want", [((0, 0), (0, 0, 0, 0)), ((1, 1), (1, 1, 1, 1)), ((2, -1), (4, 1, -2, -1))])
def test_phi_examples(e, want):
    np.testing.assert_array_equal(phi(e), want)


def test_grad_phi_examples():
    np.testing.assert_array_equal(grad_phi((0, 0)), np.zeros((4, 2)))
    np.testing.assert_array_equal(grad_phi((1, 2)), [[2, 0], [0, 4], [2, 1], [0, 12]])


def test_grad_phi_matches_central_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for e in rng.normal(0, 1.0, size=(1000, 2)):
        J = grad_phi(e)
        fd = np.empty((4, 2))
        for j in range(2):
            d = np.zeros(2)
            d[j] = h
            fd[:, j] = (phi(e + d) - phi(e - d)) / (2 * h)
        assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))


def test_projection_and_value_gradient_agree_with_jacobian():
    rng = np.random.default_rng(1)
    for _ in range(100):
        e, d, W = rng.normal(size=2), rng.normal(size=2), rng.normal(size=4)
        np.testing.assert_allclose(FEATURES.project(e, d), grad_phi(e) @ d, rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(grad_phi_w(e, W), grad_phi(e).T @ W, rtol=1e-14, atol=1e-14)


def test_regressand_at_origin():
    r = make_regressand(FEATURES, SUB, POL, Q, (0.0, 0.0), 0.0)
    assert r.theta == 0.0
    np.testing.assert_array_equal(r.Y, np.zeros(4))
    assert r.is_finite()


def test_regressand_with_reference_parameters():
    e = np.array([0.01, 0.0])
    r = make_regressand(FEATURES, SUB, POL, Q, e, 0.0)
    assert r.theta == pytest.approx(0.03, abs=1e-15)
    # A e = (0, -0.08); dPhi(e) (A e) by hand
    np.testing.assert_allclose(r.Y, [0.0, 0.0, 0.01 * -0.08, 0.0], atol=1e-18)
    np.testing.assert_allclose(r.Y, grad_phi(e) @ (SUB.A @ e), atol=1e-18)


def test_regressand_round_trip_on_synthetic_lip():
    W_star = np.array([1.5, -0.3, 0.7, 2.0])
    rng = np.random.default_rng(2)
    for _ in range(20):
        e, du = rng.normal(size=2), rng.uniform(-0.09, 0.09)
        Y = make_regressand(FEATURES, SUB, POL, Q, e, du).Y
        crit = CriticState(W_hat=W_star)
        assert crit.theta_tilde(Regressand(float(-W_star @ Y), Y)) == pytest.approx(0.0, abs=1e-12)


def test_admit_fills_then_rejects_duplicate():
    buf = ExperienceBuffer(4)
    assert len(buf) == 0 and buf.rank_report() == (0, 0.0)
    for y in np.eye(4):
        assert buf.admit(Regressand(1.0, y))
    assert buf.full
    rank, smin = buf.rank_report()
    assert rank == 4 and smin == pytest.approx(1.0)
    assert not buf.admit(Regressand(1.0, np.eye(4)[2].copy()))
    np.testing.assert_array_equal(buf.Y, np.eye(4))


def test_admit_replaces_when_richness_improves():
    buf = ExperienceBuffer(4)
    rows = [np.eye(4)[0], np.eye(4)[1], np.eye(4)[2], 0.01 * np.eye(4)[3]]
    for y in rows:
        buf.admit(Regressand(0.0, y))
    before = buf.rank_report()[1]
    assert buf.admit(Regressand(0.0, np.eye(4)[3]))
    assert buf.rank_report()[1] > before


def test_greedy_admission_never_lowers_sigma_min():
    rng = np.random.default_rng(3)
    buf = ExperienceBuffer(10)
    last = 0.0
    for y in rng.normal(size=(300, 4)):
        buf.admit(Regressand(0.0, y))
        if buf.full:
            smin = buf.rank_report()[1]
            assert smin >= last * (1 - 1e-12)
            last = smin


def test_fifo_overwrites_oldest():
    buf = ExperienceBuffer(3, policy="fifo")
    for k in range(5):
        assert buf.admit(Regressand(float(k), np.full(4, float(k))))
    assert sorted(buf.theta.tolist()) == [2.0, 3.0, 4.0]
    assert buf.pointer == 2


def test_zero_capacity_and_bad_arguments():
    buf = ExperienceBuffer(0)
    assert not buf.admit(Regressand(0.0, np.ones(4)))
    with pytest.raises(ValueError):
        ExperienceBuffer(-1)
    with pytest.raises(ValueError):
        ExperienceBuffer(3, policy="lifo")


def test_buffer_serialization_round_trip():
    buf = ExperienceBuffer(5)
    rng = np.random.default_rng(4)
    for y in rng.normal(size=(7, 4)):
        buf.admit(Regressand(float(y.sum()), y))
    clone = ExperienceBuffer.from_dict(buf.to_dict())
    assert clone.count == buf.count and clone.pointer == buf.pointer
    np.testing.assert_array_equal(clone.Y, buf.Y)
    np.testing.assert_array_equal(clone.theta, buf.theta)
    bad = buf.to_dict()
    bad["count"] = 9
    with pytest.raises(ValueError):
        ExperienceBuffer.from_dict(bad)


def test_rank_report_examples():
    assert rank_report(np.zeros((0, 4))) == (0, 0.0)
    assert rank_report([[0.0, 1.0, 0.0, 0.0]])[0] == 1
    rank, smin = rank_report(np.random.default_rng(5).normal(size=(10, 4)))
    assert rank == 4 and smin > 0
    assert rank_report(np.outer(np.arange(1, 8), [1.0, 2.0, 3.0, 4.0]))[0] == 1


def test_four_independent_samples_reach_full_rank():
    rng = np.random.default_rng(6)
    buf = ExperienceBuffer(10)
    for y in rng.normal(size=(4, 4)):
        buf.admit(Regressand(0.0, y))
    assert buf.rank_report()[0] == 4


def test_gamma_validation():
    CriticState(Gamma=[100, 4, 0.1, 16])
    with pytest.raises(ValueError):
        CriticState(Gamma=np.diag([1.0, 1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        CriticState(Gamma=np.triu(np.ones((4, 4))))
    with pytest.raises(ValueError):
        CriticState(k_t=-1.0)


def test_weight_step_fixed_point(backend):
    # small integers keep Theta = -W'Y exact so the residual is exactly zero
    rng = np.random.default_rng(7)
    W = rng.integers(-5, 6, size=4).astype(float)
    buf = lip_buffer(W, rng.integers(-5, 6, size=(10, 4)).astype(float))
    y = rng.integers(-5, 6, size=4).astype(float)
    crit = CriticState(W_hat=W, Gamma=[100, 4, 0.1, 16])
    weight_step(crit, Regressand(float(-W @ y), y), buf, 1e-3)
    np.testing.assert_array_equal(crit.W_hat, W)


def test_weight_step_matches_update_law(backend):
    rng = np.random.default_rng(8)
    G = rng.normal(size=(4, 4))
    G = G @ G.T + 4 * np.eye(4)
    W = rng.normal(size=4)
    buf = ExperienceBuffer(6)
    for y in rng.normal(size=(6, 4)):
        buf.admit(Regressand(float(rng.normal()), y))
    y, th = rng.normal(size=4), float(rng.normal())
    crit = CriticState(W_hat=W, Gamma=G, k_t=0.2, k_e=0.01)
    tt = th + W @ y
    grad = 0.2 * y * tt + 0.01 * sum(yl * (tl + W @ yl) for yl, tl in buf.entries())
    weight_step(crit, Regressand(th, y), buf, 1e-3)
    np.testing.assert_allclose(crit.W_hat, W - 1e-3 * G @ grad, rtol=1e-13, atol=1e-15)


def test_weight_step_rejects_bad_step_and_divergence():
    crit = CriticState()
    with pytest.raises(ValueError):
        weight_step(crit, None, None, 0.0)
    crit = CriticState(W_hat=[1e300, 0, 0, 0], Gamma=np.eye(4) * 1e10)
    with pytest.raises(LearnerDivergenceError):
        weight_step(crit, Regressand(1e300, np.array([1e10, 0, 0, 0])), None, 1.0)


def test_convergence_with_identity_gain():
    rng = np.random.default_rng(9)
    W_star = rng.normal(size=4)
    Ys = rng.normal(0, 3.0, size=(10, 4))
    buf = lip_buffer(W_star, Ys)
    crit = CriticState(Gamma=np.eye(4), k_t=0.2, k_e=0.01)
    stream = rng.normal(0, 3.0, size=(1000, 4))
    for k in range(100_000):
        y = stream[k % 1000]
        weight_step(crit, Regressand(float(-W_star @ y), y), buf, 1e-3)
    assert np.linalg.norm(crit.W_hat - W_star) < 1e-6
    e = np.array([0.3, -0.7])
    assert value_estimate(crit, FEATURES, e) == pytest.approx(W_star @ phi(e), abs=1e-5)


def test_rank_deficient_buffer_learns_only_excited_direction():
    v = np.array([1.0, 2.0, -1.0, 0.5])
    v /= np.linalg.norm(v)
    W_star = np.array([0.5, -1.0, 2.0, 1.0])
    W0 = np.array([0.3, 0.3, -0.2, 0.1])
    buf = lip_buffer(W_star, [s * v for s in (1.0, 2.0, -3.0, 0.5, 4.0)])
    assert buf.rank_report()[0] == 1
    crit = CriticState(W_hat=W0, Gamma=np.eye(4), k_t=0.2, k_e=0.01)
    for _ in range(50_000):
        weight_step(crit, None, buf, 1e-3)
    P_ortho = np.eye(4) - np.outer(v, v)
    np.testing.assert_allclose(P_ortho @ crit.W_hat, P_ortho @ W0, atol=1e-12)
    assert abs(v @ (crit.W_hat - W_star)) < 1e-6


def test_off_policy_updates_depend_only_on_stored_pairs():
    rng = np.random.default_rng(10)
    Ys = rng.normal(size=(8, 4))
    th = rng.normal(size=8)
    a = ExperienceBuffer(8, policy="sigma_min")
    b = ExperienceBuffer(8, policy="fifo")
    for y, t in zip(Ys, th):
        a.admit(Regressand(float(t), y))
        b.admit(Regressand(float(t), y))
    ca, cb = CriticState(k_t=0.2), CriticState(k_t=0.2)
    for y in rng.normal(size=(100, 4)):
        r = Regressand(0.1, y)
        weight_step(ca, r, a, 1e-3)
        weight_step(cb, r, b, 1e-3)
    np.testing.assert_array_equal(ca.W_hat, cb.W_hat)


def test_gain_overrides_isolate_terms():
    rng = np.random.default_rng(11)
    buf = lip_buffer(np.ones(4), rng.normal(size=(5, 4)))
    y = rng.normal(size=4)
    crit = CriticState(k_t=0.2, k_e=0.01)
    weight_step(crit, Regressand(1.0, y), buf, 1e-3, k_e=0.0)
    np.testing.assert_allclose(crit.W_hat, -1e-3 * 0.2 * y * 1.0, rtol=1e-14)
    crit = CriticState(k_t=0.2, k_e=0.01)
    weight_step(crit, Regressand(1.0, y), buf, 1e-3, k_t=0.0)
    want = -1e-3 * 0.01 * sum(yl * tl for yl, tl in buf.entries())
    np.testing.assert_allclose(crit.W_hat, want, rtol=1e-13)


def test_value_estimate_examples():
    crit = CriticState()
    assert value_estimate(crit, FEATURES, (0.0, 0.0)) == 0.0
    crit = CriticState(W_hat=[1.0, 0.0, 0.0, 0.0])
    assert value_estimate(crit, FEATURES, (2.0, 0.0)) == 4.0

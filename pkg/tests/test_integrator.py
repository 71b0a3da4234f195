import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from unbiased_hmc import targets as T
from unbiased_hmc.integrator import (
    IDENTITY,
    MassMatrix,
    PhasePoint,
    exact_gaussian_flow,
    hamiltonian,
    integrate,
    leapfrog,
)

FLAT = T.TargetModel(3, potential=lambda q: 0.0, gradient=lambda q: np.zeros_like(q), name="flat")


def _bundled():
    r = np.random.default_rng(3)
    X = r.standard_normal((30, 2))
    y = (r.random(30) < 0.5).astype(float)
    return [
        T.standard_normal_target(2),
        T.gaussian_target([0.5], 2.0),
        T.rosenbrock_target(),
        T.logistic_target(T.LogisticModelSpec(X, y, T.FixedGaussianPrior(1.0))),
        T.logistic_target(T.LogisticModelSpec(X, y)),
        T.cox_target(T.CoxModelSpec(2, np.array([1.0, 0.0, 2.0, 0.0]))),
    ]


BUNDLED = _bundled()


def test_hamiltonian_values():
    t = T.standard_normal_target(1)
    assert hamiltonian(PhasePoint([0.0], [0.0]), t) == 0.0
    assert hamiltonian(PhasePoint([1.0], [1.0]), t) == 1.0
    flat1 = T.TargetModel(1, potential=lambda q: 0.0, gradient=lambda q: np.zeros(1))
    assert hamiltonian(PhasePoint([0.0], [2.0]), flat1, MassMatrix.dense([[4.0]])) == pytest.approx(0.5)


def test_phase_point_shape_check():
    with pytest.raises(ValueError):
        PhasePoint([0.0, 1.0], [0.0])


def test_single_step_hand_computation():
    out = leapfrog(PhasePoint([1.0], [0.0]), T.standard_normal_target(1), 0.2, 1)
    assert out.position[0] == pytest.approx(0.98, abs=1e-15)
    assert out.momentum[0] == pytest.approx(-0.198, abs=1e-15)
    assert not out.divergent


@given(st.floats(0.001, 1.0), st.integers(1, 50))
def test_flat_potential_is_pure_drift(eps, n_steps):
    q, p = np.array([0.3, -1.0, 2.0]), np.array([1.0, 0.5, -0.25])
    out = leapfrog(PhasePoint(q, p), FLAT, eps, n_steps)
    np.testing.assert_allclose(out.position, q + eps * n_steps * p, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(out.momentum, p)


def test_matches_exact_flow_quarter_period():
    out = leapfrog(PhasePoint([1.0], [0.5]), T.standard_normal_target(1), 0.01, 157)
    q, p = exact_gaussian_flow(1.0, 0.5, 1.57)
    assert abs(out.position[0] - q) < 1e-3
    assert abs(out.momentum[0] - p) < 1e-3


def test_gradient_count_is_l_plus_one():
    calls = []
    base = T.standard_normal_target(2)
    t = T.TargetModel(2, potential=base.potential,
                      gradient=lambda q: calls.append(1) or base.gradient(q))
    leapfrog(PhasePoint([1.0, 0.0], [0.0, 1.0]), t, 0.1, 12)
    assert len(calls) == 13


def test_invalid_arguments():
    with pytest.raises(ValueError):
        leapfrog(PhasePoint([0.0], [0.0]), T.standard_normal_target(1), 0.0, 1)
    with pytest.raises(ValueError):
        leapfrog(PhasePoint([0.0], [0.0]), T.standard_normal_target(1), 0.1, 0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_flagged():
    bad = T.TargetModel(1, potential=lambda q: float(q[0] ** 4),
                        gradient=lambda q: 4 * q ** 3)
    out = leapfrog(PhasePoint([1e30], [0.0]), bad, 0.5, 5)
    assert out.divergent
    nan_grad = T.TargetModel(1, potential=lambda q: 0.0, gradient=lambda q: np.array([np.nan]))
    assert leapfrog(PhasePoint([0.0], [1.0]), nan_grad, 0.1, 3).divergent


# ---------------------------------------------------------------- exact flow

def test_exact_flow_examples():
    q, p = exact_gaussian_flow(1.0, 0.0, math.pi / 2)
    assert q == pytest.approx(0.0, abs=1e-15) and p == pytest.approx(-1.0, abs=1e-15)
    assert exact_gaussian_flow(0.3, -0.7, 0.0) == (0.3, -0.7)
    assert exact_gaussian_flow(2.0, 0.0, 5.3, mu=2.0, sigma=0.4) == (2.0, 0.0)
    with pytest.raises(ValueError):
        exact_gaussian_flow(0.0, 0.0, 1.0, sigma=0.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 10), st.floats(0.2, 4))
def test_exact_flow_conserves_energy(q0, p0, t, sigma):
    q, p = exact_gaussian_flow(q0, p0, t, 0.0, sigma)
    e0 = 0.5 * q0 ** 2 / sigma ** 2 + 0.5 * p0 ** 2
    assert 0.5 * q ** 2 / sigma ** 2 + 0.5 * p ** 2 == pytest.approx(e0, rel=1e-9, abs=1e-12)


# ---------------------------------------------------------------- mass matrix

def test_mass_factor_reproduces_matrix():
    r = np.random.default_rng(1)
    A = r.standard_normal((5, 5))
    M = A @ A.T + 5 * np.eye(5)
    mm = MassMatrix.dense(M)
    np.testing.assert_allclose(mm.factor @ mm.factor.T, M, atol=1e-10)
    p = r.standard_normal(5)
    np.testing.assert_allclose(mm.velocity(p), np.linalg.solve(M, p), rtol=1e-10)
    assert IDENTITY.is_identity and not mm.is_identity


def test_mass_matrix_rejects_non_spd():
    with pytest.raises(ValueError, match="pivot"):
        MassMatrix.dense([[1.0, 0.0], [0.0, -1.0]])


def test_preconditioned_drift_uses_velocity():
    mm = MassMatrix.dense(np.diag([4.0, 1.0]))
    q, p = np.zeros(2), np.array([2.0, 1.0])
    flat = T.TargetModel(2, potential=lambda q: 0.0, gradient=lambda q: np.zeros(2))
    out = leapfrog(PhasePoint(q, p), flat, 0.5, 2, mm)
    np.testing.assert_allclose(out.position, [0.5, 1.0])


# ---------------------------------------------------------------- invariants

@pytest.mark.parametrize("target", BUNDLED, ids=lambda t: t.name)
@given(seed=st.integers(0, 2**32 - 1))
def test_reversibility(target, seed):
    r = np.random.default_rng(seed)
    q = r.standard_normal(target.dim) * 0.5
    if target.name.startswith("cox"):
        q = q + target.spec.mean
    p = r.standard_normal(target.dim)
    eps, n = 0.01, 10
    q1, p1, div = integrate(q, p, target, eps, n)
    assert not div
    q2, p2, _ = integrate(q1, -p1, target, eps, n)
    np.testing.assert_allclose(q2, q, rtol=0, atol=1e-12)
    np.testing.assert_allclose(-p2, p, rtol=0, atol=1e-12)


def _jacobian_det(target, q, p, eps, n, h=1e-6):
    d = q.size
    z = np.concatenate([q, p])

    def flow(v):
        a, b, _ = integrate(v[:d], v[d:], target, eps, n)
        return np.concatenate([a, b])

    J = np.empty((2 * d, 2 * d))
    for j in range(2 * d):
        e = np.zeros(2 * d)
        e[j] = h
        J[:, j] = (flow(z + e) - flow(z - e)) / (2 * h)
    return np.linalg.det(J)


@pytest.mark.parametrize("target", [t for t in BUNDLED if t.dim <= 3], ids=lambda t: t.name)
def test_volume_preservation(target):
    r = np.random.default_rng(11)
    for _ in range(5):
        q = r.standard_normal(target.dim) * 0.5
        p = r.standard_normal(target.dim)
        assert abs(_jacobian_det(target, q, p, 0.05, 10) - 1.0) <= 1e-6


def _mean_errors(eps, t=1.0, n_starts=100):
    r = np.random.default_rng(5)
    target = T.standard_normal_target(1)
    n = int(round(t / eps))
    de, dq = [], []
    for _ in range(n_starts):
        q0, p0 = r.standard_normal(), r.standard_normal()
        q1, p1, _ = integrate(np.array([q0]), np.array([p0]), target, eps, n)
        de.append(abs((0.5 * q1[0] ** 2 + 0.5 * p1[0] ** 2) - (0.5 * q0 ** 2 + 0.5 * p0 ** 2)))
        qe, pe = exact_gaussian_flow(q0, p0, n * eps)
        dq.append(math.hypot(q1[0] - qe, p1[0] - pe))
    return np.mean(de), np.mean(dq)


def test_second_order_energy_and_trajectory_error():
    e1, q1 = _mean_errors(0.1)
    e2, q2 = _mean_errors(0.05)
    assert 3.5 <= e1 / e2 <= 4.5
    assert 3.5 <= q1 / q2 <= 4.5


@pytest.mark.parametrize("t_total", [math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi])
def test_common_momentum_contraction(t_total):
    eps = 0.01
    n = int(round(t_total / eps))
    target = T.standard_normal_target(1)
    r = np.random.default_rng(8)
    for _ in range(20):
        q1, q2, p = r.standard_normal(), r.standard_normal(), r.standard_normal()
        a, _, _ = integrate(np.array([q1]), np.array([p]), target, eps, n)
        b, _, _ = integrate(np.array([q2]), np.array([p]), target, eps, n)
        ratio = abs(a[0] - b[0]) / abs(q1 - q2)
        assert abs(ratio - abs(math.cos(n * eps))) <= 10 * eps ** 2

import numpy as np
import pytest

import ode_systems
from errors import (
    DimensionMismatch,
    Divergence,
    InvalidConfigError,
    RejectionBudgetExceeded,
    SingularMassMatrix,
    UnsupportedSystem,
)
from ode_systems import (
    KLinkPendulumParams,
    check_states,
    energy,
    jacobian,
    klink_matrix,
    make_rng,
    make_system,
    rhs,
    sample_initial,
    solve_pivoted,
)
from solvers import IntegrationPlan, SolverScheme, integrate


def numeric_jacobian(system, u, h=1e-6):
    u = np.atleast_2d(u)
    cols = []
    for j in range(system.dim):
        step = np.zeros(system.dim)
        step[j] = h
        cols.append((system.f(u + step) - system.f(u - step)) / (2 * h))
    return np.stack(cols, axis=2)


# ── Construction ────────────────────────────────────────────────────────


def test_spring_chain_defaults():
    system = make_system("spring-chain")
    assert system.dim == 40
    assert len(system.params.masses) == 20
    assert len(system.params.stiffness) == 21


def test_unknown_system_rejected():
    with pytest.raises(InvalidConfigError):
        make_system("lorenz")


def test_bad_parameters_rejected():
    with pytest.raises(InvalidConfigError):
        make_system("henon-heiles", {"mu": 2.0})
    with pytest.raises(InvalidConfigError):
        make_system("spring-chain", {"masses": [1.0, 1.0], "stiffness": [1.0, 1.0]})
    with pytest.raises(InvalidConfigError):
        make_system("k-link-pendulum", {"links": 0})


def test_wrong_state_dimension():
    with pytest.raises(DimensionMismatch):
        rhs(make_system("henon-heiles"), np.zeros((3, 5)))


def test_single_state_is_promoted_to_batch():
    out = rhs(make_system("henon-heiles"), [0.1, 0.2, 0.3, 0.4])
    assert out.shape == (1, 4)


# ── Right-hand sides ────────────────────────────────────────────────────


def test_spring_chain_rest_state_is_equilibrium():
    system = make_system("spring-chain")
    np.testing.assert_array_equal(rhs(system, np.zeros((2, 40))), np.zeros((2, 40)))


def test_spring_chain_single_mass_forces():
    system = make_system("spring-chain", {"masses": [2.0], "stiffness": [3.0, 5.0]})
    out = rhs(system, [[0.5, 4.0]])
    np.testing.assert_allclose(out, [[4.0 / 2.0, -(3.0 + 5.0) * 0.5]])


def test_henon_heiles_follows_its_hamiltonian():
    system = make_system("henon-heiles")
    u = make_rng(1).uniform(-0.5, 0.5, size=(5, 4))
    h = 1e-6
    grad = np.zeros_like(u)
    for j in range(4):
        step = np.zeros(4)
        step[j] = h
        grad[:, j] = (system.hamiltonian(u + step) - system.hamiltonian(u - step)) / (2 * h)
    f = rhs(system, u)
    np.testing.assert_allclose(f[:, :2], grad[:, 2:], atol=1e-8)
    np.testing.assert_allclose(f[:, 2:], -grad[:, :2], atol=1e-8)


def test_one_link_pendulum_matches_mass_matrix_form():
    system = make_system("k-link-pendulum", {"links": 1})
    u = np.array([[0.3, 0.2], [1.0, -0.5]])
    A, b = klink_matrix(system.params, u[:, :1], u[:, 1:])
    np.testing.assert_allclose(rhs(system, u)[:, 1], b[:, 0] / A[:, 0, 0])


@pytest.mark.parametrize(
    "system_id, params",
    [
        ("spring-chain", None),
        ("henon-heiles", None),
        ("elastic-pendulum", None),
        ("k-link-pendulum", {"links": 2}),
        ("k-link-pendulum", {"links": 3}),
    ],
)
def test_rhs_rows_are_independent(system_id, params):
    system = make_system(system_id, params)
    u = sample_initial(system, 12, seed=5)
    u[:, system.dim // 2:] += make_rng(6).uniform(-0.3, 0.3, size=(12, system.dim - system.dim // 2))
    order = make_rng(7).permutation(12)
    np.testing.assert_allclose(rhs(system, u[order]), rhs(system, u)[order], rtol=1e-14, atol=0.0)


@pytest.mark.parametrize(
    "system_id, params, scale",
    [
        ("spring-chain", {}, 1.0),
        ("henon-heiles", {}, 0.5),
        ("elastic-pendulum", {}, 0.3),
        ("k-link-pendulum", {"links": 1}, 1.0),
    ],
)
def test_analytic_jacobian_matches_finite_differences(system_id, params, scale):
    system = make_system(system_id, params)
    u = make_rng(7).uniform(-scale, scale, size=(3, system.dim))
    if system_id == "elastic-pendulum":
        u[:, 1] += 10.0
    np.testing.assert_allclose(jacobian(system, u), numeric_jacobian(system, u), rtol=1e-6, atol=1e-6)


def test_energy_unavailable_for_elastic_pendulum():
    with pytest.raises(UnsupportedSystem):
        energy(make_system("elastic-pendulum"), [[0.1, 10.0, 0.0, 0.0]])


def test_jacobian_unavailable_for_two_links():
    with pytest.raises(UnsupportedSystem):
        jacobian(make_system("k-link-pendulum", {"links": 2}), np.zeros((1, 4)))


# ── Mass matrix and elimination ─────────────────────────────────────────


def test_klink_matrix_at_rest():
    A, b = klink_matrix(KLinkPendulumParams(links=2), np.zeros(2))
    np.testing.assert_allclose(A, [[2.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(b, [0.0, 0.0])


def test_klink_matrix_gravity_term():
    K = 3
    theta = np.array([0.2, -0.1, 0.4])
    _, b = klink_matrix(KLinkPendulumParams(links=K, g=9.8), theta)
    np.testing.assert_allclose(b, -(K - np.arange(K)) * 9.8 * np.sin(theta))


def test_two_link_accelerations_match_cramer():
    g = 9.8
    theta = np.array([0.1, 0.2])
    c = np.cos(theta[0] - theta[1])
    b1, b2 = -2.0 * g * np.sin(theta[0]), -g * np.sin(theta[1])
    det = 2.0 - c * c
    expected = [(b1 - c * b2) / det, (2.0 * b2 - c * b1) / det]
    system = make_system("k-link-pendulum", {"links": 2, "g": g})
    f = rhs(system, np.array([[0.1, 0.2, 0.0, 0.0]]))
    np.testing.assert_allclose(f[0, :2], 0.0)
    np.testing.assert_allclose(f[0, 2:], expected, rtol=1e-13)


def test_three_link_matrix_matches_explicit_sums():
    K, g = 3, 9.8
    rng = make_rng(21)
    theta, omega = rng.uniform(-1.0, 1.0, K), rng.uniform(-2.0, 2.0, K)
    A_ref = np.zeros((K, K))
    b_ref = np.zeros(K)
    for i in range(1, K + 1):
        for j in range(1, K + 1):
            c = K - max(i, j) + 1
            A_ref[i - 1, j - 1] = c * np.cos(theta[i - 1] - theta[j - 1])
            b_ref[i - 1] -= c * omega[j - 1] ** 2 * np.sin(theta[i - 1] - theta[j - 1])
        b_ref[i - 1] -= (K - i + 1) * g * np.sin(theta[i - 1])
    A, b = klink_matrix(KLinkPendulumParams(links=K, g=g), theta, omega)
    np.testing.assert_allclose(A, A_ref, rtol=1e-14)
    np.testing.assert_allclose(b, b_ref, rtol=1e-13, atol=1e-14)


def test_solve_pivoted_matches_numpy():
    rng = make_rng(11)
    A = rng.normal(size=(20, 4, 4)) + 4.0 * np.eye(4)
    b = rng.normal(size=(20, 4))
    np.testing.assert_allclose(solve_pivoted(A, b), np.linalg.solve(A, b[..., None])[..., 0], rtol=1e-10)


def test_solve_pivoted_needs_row_exchange():
    A = np.array([[[0.0, 1.0], [1.0, 0.0]]])
    np.testing.assert_allclose(solve_pivoted(A, np.array([[2.0, 3.0]])), [[3.0, 2.0]])


def test_singular_matrix_rejected():
    A = np.array([[[1.0, 2.0], [2.0, 4.0]]])
    with pytest.raises(SingularMassMatrix):
        solve_pivoted(A, np.array([[1.0, 1.0]]))


# ── Divergence guard ────────────────────────────────────────────────────


def test_check_states_reports_first_bad_row():
    system = make_system("henon-heiles")
    states = np.zeros((3, 4))
    states[2, 1] = np.nan
    with pytest.raises(Divergence) as info:
        check_states(system, states, step=5, row_offset=10)
    assert info.value.step == 5
    assert info.value.trajectory == 12


def test_check_states_rejects_collapsed_spring():
    system = make_system("elastic-pendulum")
    with pytest.raises(Divergence):
        check_states(system, np.array([[0.1, -0.01, 0.0, 0.0]]), step=1)


# ── Initial-state sampling ──────────────────────────────────────────────


def test_sampling_is_deterministic():
    system = make_system("spring-chain")
    np.testing.assert_array_equal(sample_initial(system, 5, 42), sample_initial(system, 5, 42))
    assert not np.array_equal(sample_initial(system, 5, 42), sample_initial(system, 5, 43))


def test_spring_chain_sampling_range():
    u = sample_initial(make_system("spring-chain"), 200, 0)
    assert u.shape == (200, 40)
    assert np.all(np.abs(u) <= 2.5)


def test_henon_heiles_sampling_energy_window():
    system = make_system("henon-heiles")
    u = sample_initial(system, 300, 1)
    h = system.hamiltonian(u)
    assert u.shape == (300, 4)
    assert np.all((h >= 1.0 / 12.0) & (h <= 1.0 / 6.0))


def test_elastic_pendulum_sampling():
    system = make_system("elastic-pendulum")
    u = sample_initial(system, 100, 2)
    assert np.all((u[:, 0] >= 0.0) & (u[:, 0] <= np.pi / 8))
    np.testing.assert_array_equal(u[:, 1], 10.0)
    np.testing.assert_array_equal(u[:, 2:], 0.0)


def test_pendulum_sampling_by_link_count():
    one = sample_initial(make_system("k-link-pendulum", {"links": 1}), 100, 0)
    assert np.all((one[:, 0] >= 0.0) & (one[:, 0] <= np.pi / 2))
    assert np.all((one[:, 1] >= 0.0) & (one[:, 1] <= 0.5))
    two = sample_initial(make_system("k-link-pendulum", {"links": 2}), 100, 0)
    assert np.all(two[:, :2] <= np.pi / 8)
    np.testing.assert_array_equal(two[:, 2:], 0.0)


def test_sampling_count_must_be_positive():
    with pytest.raises(InvalidConfigError):
        sample_initial(make_system("henon-heiles"), 0, 0)


def test_rejection_budget(monkeypatch):
    monkeypatch.setattr(ode_systems, "REJECTION_BUDGET", 0)
    with pytest.raises(RejectionBudgetExceeded):
        sample_initial(make_system("henon-heiles"), 10, 0)


# ── Long-horizon conservation ───────────────────────────────────────────


def energy_drift(system, init, dt, horizon):
    traj = integrate(SolverScheme.RK4, system, init, IntegrationPlan.covering(dt, horizon, 1.0))
    S, N, d = traj.states.shape
    h = energy(system, traj.states.reshape(S * N, d)).reshape(S, N)
    return float(np.abs(h - h[0]).max())


@pytest.mark.slow
def test_henon_heiles_reference_conserves_energy():
    system = make_system("henon-heiles")
    assert energy_drift(system, sample_initial(system, 3, seed=0), 1e-4, 50.0) < 1e-8


@pytest.mark.slow
def test_spring_chain_reference_conserves_energy():
    system = make_system("spring-chain")
    assert energy_drift(system, sample_initial(system, 2, seed=0), 1e-4, 20.0) < 1e-6

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_continuous_lyapunov

from optosync import gaussian as ga, model
from optosync.errors import NumericalDegeneracy, UnphysicalState, Unstable
from optosync.meanfield import MeanFieldState
from optosync.model import SystemParams
from optosync.trajectory import Trajectory


def random_symplectic(rng, n):
    """Product of random passive rotations and single-mode squeezers."""
    from scipy.linalg import expm
    J = ga.symplectic_form(n)
    S = np.eye(2 * n)
    for _ in range(3):
        H = rng.normal(size=(2 * n, 2 * n))
        H = 0.3 * (H + H.T)
        S = expm(J @ H) @ S
    return S


def test_vacuum_and_thermal_spectra():
    assert np.allclose(ga.symplectic_eigenvalues(ga.vacuum()), 0.5)
    assert np.allclose(ga.symplectic_eigenvalues(ga.thermal([0, 1, 3])), [0.5, 1.5, 3.5])


def test_symplectic_invariance(rng):
    sigma = ga.thermal([0.2, 1.0, 2.5])
    S = random_symplectic(rng, 3)
    assert np.allclose(S @ ga.symplectic_form(3) @ S.T, ga.symplectic_form(3), atol=1e-9)
    assert np.allclose(ga.symplectic_eigenvalues(S @ sigma @ S.T), [0.7, 1.5, 3.0], atol=1e-8)


def test_symplectic_degeneracy():
    with pytest.raises(NumericalDegeneracy):
        ga.symplectic_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_check_physical():
    assert ga.check_physical(ga.vacuum()) == pytest.approx(0.5)
    with pytest.raises(UnphysicalState):
        ga.check_physical(0.4 * np.eye(6))


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
def test_two_mode_squeezed_negativity(r):
    assert ga.logarithmic_negativity(ga.two_mode_squeezed(r)) == pytest.approx(2 * r / math.log(2), abs=1e-10)


def test_two_mode_squeezed_mutual_information():
    r = 0.5
    nbar = math.sinh(r) ** 2
    h = (nbar + 1) * math.log2(nbar + 1) - nbar * math.log2(nbar)
    assert ga.mutual_information(ga.two_mode_squeezed(r)) == pytest.approx(2 * h, abs=1e-10)
    assert ga.gaussian_entropy(ga.two_mode_squeezed(r)) == pytest.approx(0.0, abs=1e-10)


def test_product_states_carry_no_correlations():
    s = ga.thermal([0.3, 2.0])
    assert ga.logarithmic_negativity(s) == 0.0
    assert ga.mutual_information(s) == pytest.approx(0.0, abs=1e-12)


def test_thermal_entropy_value():
    # nbar = 1 -> 2 bits
    assert ga.gaussian_entropy(ga.thermal([1.0])) == pytest.approx(2.0, abs=1e-12)


def test_synchronization_vacuum_and_means():
    assert ga.synchronization_measure(ga.vacuum()) == pytest.approx(1.0)
    assert ga.synchronization_measure(ga.vacuum(2)) == pytest.approx(1.0)
    m = MeanFieldState(q1=1.0, q2=0.0)
    assert ga.synchronization_measure(ga.vacuum(), m) == pytest.approx(1 / 1.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), occ=st.lists(st.floats(0, 3), min_size=2, max_size=2))
def test_sync_bounded_for_physical_states(seed, occ):
    rng = np.random.default_rng(seed)
    S = random_symplectic(rng, 2)
    sigma = S @ ga.thermal(occ) @ S.T
    # <q_-^2 + p_-^2> >= 1 for any physical state, so S <= 1
    assert ga.synchronization_measure(sigma) <= 1 + 1e-9
    assert ga.logarithmic_negativity(sigma) >= 0
    assert ga.mutual_information(sigma) >= 0


def test_lyapunov_matches_scipy(rng):
    p = SystemParams(mod_eps=0.0)
    A = model.build_drift_matrix(p, 0.15, 0.0)
    D = model.build_diffusion_matrix(p)
    ours = ga.lyapunov_steady_state(A, D)
    ref = solve_continuous_lyapunov(A, -D)
    assert np.allclose(ours, ref, atol=1e-9)


def test_zero_coupling_stays_vacuum():
    p = SystemParams(mod_eps=0.0)
    traj = ga.propagate_covariance(ga.vacuum(), (0, 50), p, 0.0, dt=5.0)
    assert np.abs(traj.states - ga.vacuum()).max() < 1e-9


def test_propagation_preserves_invariants(params, operating_point):
    _, G = operating_point
    traj = ga.propagate_covariance(ga.vacuum(), (0, 30), params, G, dt=0.5)
    for s in traj.states:
        assert np.array_equal(s, s.T)
        assert ga.min_symplectic_eigenvalue(s) >= 0.5 - 1e-6
        assert (ga.uncertainty_products(s) >= 0.25 - 1e-6).all()


def test_momentum_only_damping_is_not_completely_positive(operating_point):
    p = SystemParams(mechanical_damping="momentum")
    _, G = operating_point
    with pytest.raises(UnphysicalState):
        ga.propagate_covariance(ga.vacuum(), (0, 200), p, G, dt=1.0)


def test_floquet_unmodulated_moduli(operating_point):
    p = SystemParams(mod_eps=0.0)
    _, G = operating_point
    rep = ga.floquet_stability(p, G)
    lam = np.linalg.eigvals(model.build_drift_matrix(p, G, 0.0))
    expected = np.sort(np.exp(lam.real * rep.period))
    assert np.allclose(rep.moduli, expected, rtol=1e-7)
    assert rep.stable


def test_periodic_covariance_is_a_fixed_point(params, operating_point):
    _, G = operating_point
    per = ga.periodic_covariance(params, G, samples=64)
    assert per.observables["closure"] < 1e-8
    # Long transient from the vacuum reaches the same cycle.
    T = params.mod_period
    n = 120
    far = ga.propagate_covariance(ga.vacuum(), (0, n * T), params, G, t_eval=[n * T], rtol=1e-10, atol=1e-13)
    assert np.abs(far.states[-1] - per.states[0]).max() < 1e-5


def test_periodic_covariance_requires_stability():
    p = SystemParams(delta=-1.0)
    with pytest.raises(Unstable):
        ga.periodic_covariance(p, 0.2)


def test_convergence_time():
    t = np.arange(0, 40.0, 0.5)
    states = np.array([np.eye(6) * (1 + math.exp(-x)) for x in t])
    tc = ga.convergence_time(Trajectory(t, states), 2.0, tol=1e-3)
    assert 5.0 < tc < 9.0
    with pytest.raises(ValueError):
        ga.convergence_time(Trajectory(t, states), 0.7)


def test_observable_series_columns(params, operating_point):
    _, G = operating_point
    traj = ga.propagate_covariance(ga.vacuum(), (0, 2), params, G, dt=1.0)
    cols = ga.observable_series(traj)
    assert tuple(cols) == ga.OBSERVABLE_COLUMNS
    assert cols["var_q1_ratio"][0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ga.observable_series(traj, means=np.zeros((2, 6)))


def test_covariance_snapshot_roundtrip(tmp_path, rng):
    s = rng.normal(size=(6, 6))
    s = s @ s.T
    path = tmp_path / "c.txt"
    ga.write_covariance_snapshot(path, s, t=1.5)
    assert np.array_equal(ga.read_covariance_snapshot(path), s)

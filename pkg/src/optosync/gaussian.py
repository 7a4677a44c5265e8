"""Covariance-matrix dynamics and Gaussian-state observables.

Covariance matrices use the quadrature ordering (q1, p1, q2, p2, ...) per
mode and the symplectic form Omega = diag([[0, 1], [-1, 0]], ...).  The
vacuum covariance is identity/2.  All logarithms are base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import NumericalDegeneracy, UnphysicalState, Unstable
from .meanfield import MeanFieldState
from .model import ZERO_POINT, SystemParams
from .trajectory import Trajectory, integrate, sample_grid, write_csv

#: Indices of the mirror quadratures in the 6x6 basis (dx, dy, dq1, dp1, dq2, dp2).
Q1, P1, Q2, P2 = 2, 3, 4, 5
QUADRATURES = {"x": 0, "y": 1, "q1": Q1, "p1": P1, "q2": Q2, "p2": P2}
OBSERVABLE_COLUMNS = ("t", "var_q1_ratio", "var_q2_ratio", "sync", "log_neg", "mutual_info")

PHYSICALITY_TOL = 1e-6


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def vacuum(n_modes: int = 3) -> np.ndarray:
    return ZERO_POINT * np.eye(2 * n_modes)


def thermal(occupancies) -> np.ndarray:
    """Product of thermal states with the given mean occupancies."""
    occ = np.repeat(np.asarray(occupancies, dtype=float), 2)
    return np.diag(occ + ZERO_POINT)


def initial_covariance(n_cav: float = 0.0, n_m1: float = 0.0, n_m2: float = 0.0) -> np.ndarray:
    """Starting covariance of the full system; the default is the vacuum."""
    return thermal([n_cav, n_m1, n_m2])


def two_mode_squeezed(r: float) -> np.ndarray:
    """Standard-form covariance of a two-mode squeezed vacuum."""
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    z = np.diag([1.0, -1.0])
    return ZERO_POINT * np.block([[c * np.eye(2), s * z], [s * z, c * np.eye(2)]])


def symplectic_eigenvalues(sigma, tol: float = 1e-8) -> np.ndarray:
    """Symplectic spectrum of ``sigma``, ascending.

    The eigenvalues of i*Omega*sigma come in +/- pairs; their moduli are
    returned once each.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ sigma)
    if np.abs(ev.imag).max() > tol * max(1.0, np.abs(ev).max()):
        raise NumericalDegeneracy(f"complex symplectic eigenvalues {ev}")
    ev = np.sort(ev.real)
    pos, neg = ev[n:], -ev[:n][::-1]
    if np.abs(pos - neg).max() > tol * max(1.0, pos.max()) or (pos < 0).any():
        raise NumericalDegeneracy(f"eigenvalues do not pair: {ev}")
    return 0.5 * (pos + neg)


def min_symplectic_eigenvalue(sigma) -> float:
    return float(symplectic_eigenvalues(sigma)[0])


def uncertainty_products(sigma) -> np.ndarray:
    """Per-mode determinant sigma_qq*sigma_pp - sigma_qp^2 (>= 1/4 if physical)."""
    sigma = np.asarray(sigma)
    n = sigma.shape[0] // 2
    return np.array([
        sigma[2 * k, 2 * k] * sigma[2 * k + 1, 2 * k + 1] - sigma[2 * k, 2 * k + 1] ** 2
        for k in range(n)
    ])


def check_physical(sigma, tol: float = PHYSICALITY_TOL, t=None) -> float:
    nu = min_symplectic_eigenvalue(sigma)
    if nu < ZERO_POINT - tol:
        where = f" at t={t:.6g}" if t is not None else ""
        raise UnphysicalState(f"symplectic eigenvalue {nu:.9f} below 1/2{where}")
    return nu


def propagate_covariance(
    sigma0,
    t_span,
    params: SystemParams,
    coupling_g_eff: float,
    dt: float | None = None,
    t_eval=None,
    rtol: float = 1e-8,
    atol: float = 1e-11,
    check: bool = True,
) -> Trajectory:
    """Integrate d(sigma)/dt = A(t) sigma + sigma A(t)^T + D.

    Every output sample is symmetrized and, with ``check``, tested for
    physicality.
    """
    t0, t1 = map(float, t_span)
    if t_eval is None:
        t_eval = sample_grid(t0, t1, dt if dt is not None else (t1 - t0) / 1000)
    D = model.build_diffusion_matrix(params)
    # Only A[3, 2] varies in time; patch it instead of rebuilding.
    A = model.build_drift_matrix(params, coupling_g_eff, 0.0)
    w, eps, Om = params.omega_m, params.mod_eps, params.mod_omega

    def rhs(t, y):
        A[3, 2] = -w * (1.0 + eps * math.sin(Om * t) ** 2)
        s = y.reshape(6, 6)
        As = A @ s
        return (As + As.T + D).ravel()

    sol = integrate(rhs, (t0, t1), np.asarray(sigma0, dtype=float).ravel(), np.asarray(t_eval), rtol, atol)
    sig = sol.y.T.reshape(-1, 6, 6)
    sig = 0.5 * (sig + sig.transpose(0, 2, 1))
    if check:
        for t, s in zip(sol.t, sig):
            check_physical(s, t=t)
    return Trajectory(sol.t, sig)


def lyapunov_steady_state(A, D) -> np.ndarray:
    """Solve A X + X A^T + D = 0 as a dense linear system in vec(X)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    L = np.kron(eye, A) + np.kron(A, eye)
    x = np.linalg.solve(L, -np.asarray(D, dtype=float).ravel(order="F"))
    X = x.reshape((n, n), order="F")
    return 0.5 * (X + X.T)


def monodromy(params: SystemParams, coupling_g_eff: float, period: float | None = None,
              rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """One-period propagator of dU/dt = A(t) U starting from U(0) = 1."""
    if period is None:
        period = params.mod_period if params.mod_omega else 1.0
    A = model.build_drift_matrix(params, coupling_g_eff, 0.0)
    w, eps, Om = params.omega_m, params.mod_eps, params.mod_omega

    def rhs(t, y):
        A[3, 2] = -w * (1.0 + eps * math.sin(Om * t) ** 2)
        return (A @ y.reshape(6, 6)).ravel()

    sol = integrate(rhs, (0.0, period), np.eye(6).ravel(), None, rtol, atol)
    return sol.y[:, -1].reshape(6, 6)


@dataclass(frozen=True)
class StabilityReport:
    multipliers: np.ndarray
    period: float

    @property
    def moduli(self) -> np.ndarray:
        return np.sort(np.abs(self.multipliers))

    @property
    def spectral_radius(self) -> float:
        return float(self.moduli[-1])

    @property
    def stable(self) -> bool:
        return self.spectral_radius < 1.0


def floquet_stability(params: SystemParams, coupling_g_eff: float) -> StabilityReport:
    """Floquet multipliers of the fluctuation dynamics over one modulation period."""
    period = params.mod_period if params.mod_omega else 1.0
    M = monodromy(params, coupling_g_eff, period)
    return StabilityReport(np.linalg.eigvals(M), period)


def periodic_covariance(params: SystemParams, coupling_g_eff: float, samples: int = 400,
                        rtol: float = 1e-10, atol: float = 1e-13) -> Trajectory:
    """Asymptotic periodic covariance, obtained without a transient.

    Over one period, sigma(T) = M sigma(0) M^T + Q where M is the monodromy
    and Q the response from sigma(0) = 0; the periodic solution is the fixed
    point of that affine map.  Requires a stable system.  The returned
    trajectory covers [0, T) with ``samples`` points.
    """
    period = params.mod_period if params.mod_omega else 1.0
    M = monodromy(params, coupling_g_eff, period)
    report = StabilityReport(np.linalg.eigvals(M), period)
    if not report.stable:
        raise Unstable(f"Floquet spectral radius {report.spectral_radius:.6f} >= 1")
    Q = propagate_covariance(np.zeros((6, 6)), (0.0, period), params, coupling_g_eff,
                             t_eval=[0.0, period], rtol=rtol, atol=atol, check=False).states[-1]
    L = np.eye(36) - np.kron(M, M)
    s0 = np.linalg.solve(L, Q.ravel()).reshape(6, 6)
    s0 = 0.5 * (s0 + s0.T)
    grid = period * np.arange(samples) / samples
    traj = propagate_covariance(s0, (0.0, period), params, coupling_g_eff,
                                t_eval=np.append(grid, period), rtol=rtol, atol=atol)
    traj.observables["closure"] = float(np.abs(traj.states[-1] - s0).max())
    return Trajectory(traj.t[:-1], traj.states[:-1], traj.observables)


def quadrature_variance_ratio(sigma, index) -> float:
    """Variance of one quadrature divided by the zero-point level 1/2."""
    if isinstance(index, str):
        index = QUADRATURES[index]
    return float(np.asarray(sigma)[index, index] / ZERO_POINT)


def synchronization_measure(sigma, means: MeanFieldState | None = None) -> float:
    """S = 1 / <q_-^2 + p_-^2> with q_- = (q1 - q2)/sqrt(2), p_- likewise.

    ``means`` adds the first-moment contribution; pass None for the
    fluctuation-only value.
    """
    s = np.asarray(sigma)
    if s.shape[0] == 4:
        q1, p1, q2, p2 = 0, 1, 2, 3
    else:
        q1, p1, q2, p2 = Q1, P1, Q2, P2
    var = 0.5 * (s[q1, q1] + s[q2, q2] - 2 * s[q1, q2] + s[p1, p1] + s[p2, p2] - 2 * s[p1, p2])
    if means is not None:
        var += 0.5 * ((means.q1 - means.q2) ** 2 + (means.p1 - means.p2) ** 2)
    return float(1.0 / var)


def reduced_mirror_block(sigma) -> np.ndarray:
    """Covariance of the two mirrors (partial trace over the cavity)."""
    return np.array(np.asarray(sigma)[2:6, 2:6])


def logarithmic_negativity(sigma2) -> float:
    """Logarithmic negativity of a two-mode Gaussian state (bits)."""
    pt = np.diag([1.0, 1.0, 1.0, -1.0])
    nu = min_symplectic_eigenvalue(pt @ np.asarray(sigma2, dtype=float) @ pt)
    return max(0.0, -math.log2(2.0 * nu))


def _entropy_term(nu: float) -> float:
    hi, lo = nu + 0.5, nu - 0.5
    if lo <= 1e-14:
        return 0.0
    return hi * math.log2(hi) - lo * math.log2(lo)


def gaussian_entropy(sigma) -> float:
    """Von Neumann entropy (bits) from the symplectic spectrum."""
    return float(sum(_entropy_term(nu) for nu in symplectic_eigenvalues(sigma)))


def mutual_information(sigma2) -> float:
    """I = S(A) + S(B) - S(AB) for a two-mode covariance matrix (bits)."""
    s = np.asarray(sigma2, dtype=float)
    value = gaussian_entropy(s[:2, :2]) + gaussian_entropy(s[2:, 2:]) - gaussian_entropy(s)
    return max(0.0, value)


@dataclass(frozen=True)
class GaussianObservables:
    var_q1: float
    var_q2: float
    var_p1: float
    var_p2: float
    sync: float
    log_neg: float
    mutual_info: float


def observables(sigma, means: MeanFieldState | None = None) -> GaussianObservables:
    block = reduced_mirror_block(sigma)
    return GaussianObservables(
        var_q1=quadrature_variance_ratio(sigma, Q1),
        var_q2=quadrature_variance_ratio(sigma, Q2),
        var_p1=quadrature_variance_ratio(sigma, P1),
        var_p2=quadrature_variance_ratio(sigma, P2),
        sync=synchronization_measure(sigma, means),
        log_neg=logarithmic_negativity(block),
        mutual_info=mutual_information(block),
    )


def observable_series(cov: Trajectory, means=None) -> dict:
    """Observable columns for every covariance sample.

    ``means`` is an (N, 6) array or mean-field Trajectory on the same grid,
    or None to leave out the first-moment part of S.
    """
    if means is not None:
        means = getattr(means, "states", means)
        if len(means) != len(cov.t):
            raise ValueError("mean-field samples must match covariance samples")
    cols = {name: np.empty(len(cov.t)) for name in OBSERVABLE_COLUMNS[1:]}
    for i, s in enumerate(cov.states):
        m = MeanFieldState.from_array(means[i]) if means is not None else None
        obs = observables(s, m)
        cols["var_q1_ratio"][i] = obs.var_q1
        cols["var_q2_ratio"][i] = obs.var_q2
        cols["sync"][i] = obs.sync
        cols["log_neg"][i] = obs.log_neg
        cols["mutual_info"][i] = obs.mutual_info
    return {"t": np.asarray(cov.t), **cols}


def convergence_time(cov: Trajectory, period: float, tol: float = 1e-5):
    """First sample time t such that |sigma(s) - sigma(s + period)| < tol for all
    s in [t, t + period]; None if the run never settles.

    Requires a uniform grid whose spacing divides ``period``.
    """
    t = np.asarray(cov.t)
    dt = t[1] - t[0]
    shift = int(round(period / dt))
    if shift < 1 or abs(shift * dt - period) > 1e-6 * period or shift * 2 >= len(t):
        raise ValueError("grid spacing must divide the period and cover two periods")
    diff = np.abs(cov.states[shift:] - cov.states[:-shift]).max(axis=(1, 2))
    ok = diff < tol
    # window of length `period` (shift samples) all within tolerance
    run = 0
    for i, flag in enumerate(ok):
        run = run + 1 if flag else 0
        if run > shift:
            return float(t[i - shift])
    return None


def write_observables_csv(path, columns: dict):
    return write_csv(path, {k: columns[k] for k in OBSERVABLE_COLUMNS})


def write_covariance_snapshot(path, sigma, t=None):
    header = f"t = {t!r}" if t is not None else ""
    np.savetxt(path, np.asarray(sigma), fmt="%.17g", header=header)


def read_covariance_snapshot(path) -> np.ndarray:
    return np.loadtxt(path).reshape(6, 6)

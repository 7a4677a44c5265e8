"""Classical (noise-free) amplitudes of the cavity field and the two mirrors."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, astuple

import numpy as np
from scipy.optimize import fsolve

from . import model
from .errors import NoConvergence, StepFailure, Unstable
from .model import SystemParams
from .trajectory import Trajectory, integrate, sample_grid, write_csv

MEANFIELD_COLUMNS = ("alpha_re", "alpha_im", "q1", "p1", "q2", "p2")


@dataclass(frozen=True)
class MeanFieldState:
    """Mean amplitudes.

    ``drive_phase`` fixes the frame of the cavity amplitude: the drive enters
    as E*exp(i*drive_phase).  :func:`steady_state` picks the phase that makes
    the stationary amplitude real and positive.
    """

    alpha_re: float = 0.0
    alpha_im: float = 0.0
    q1: float = 0.0
    p1: float = 0.0
    q2: float = 0.0
    p2: float = 0.0
    drive_phase: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in astuple(self)):
            raise ValueError(f"non-finite mean-field state {self}")

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self)[:6])

    @classmethod
    def from_array(cls, y, drive_phase: float = 0.0) -> "MeanFieldState":
        return cls(*map(float, y[:6]), drive_phase=drive_phase)


def _rhs_array(t, y, params: SystemParams, drive: complex) -> np.ndarray:
    ar, ai, q1, p1, q2, p2 = y
    p = params
    alpha = complex(ar, ai)
    dalpha = -(1j * p.delta + p.kappa) * alpha + 1j * p.g * (q1 + q2) * alpha + drive
    n = ar * ar + ai * ai
    w2 = p.omega_m2
    return np.array([
        dalpha.real,
        dalpha.imag,
        p.omega_m * p1,
        -p.omega_m * model.modulation_factor(p, t) * q1 + p.g * n - p.gamma_m1 * p1,
        w2 * p2,
        -w2 * q2 + p.g * n - p.gamma_m2 * p2,
    ])


def classical_rhs(state: MeanFieldState, t: float, params: SystemParams) -> np.ndarray:
    """Time derivative of (alpha_re, alpha_im, q1, p1, q2, p2) with noise dropped."""
    drive = params.drive_e * cmath.exp(1j * state.drive_phase)
    return _rhs_array(t, state.as_array(), params, drive)


def photon_number_roots(params: SystemParams) -> np.ndarray:
    """All admissible stationary photon numbers (roots of the cubic
    n * (kappa^2 + (delta - g^2 * s * n)^2) = E^2 with s = 1/w1 + 1/w2)."""
    p = params
    c = p.g ** 2 * (1.0 / p.omega_m + 1.0 / p.omega_m2)
    if c == 0.0:
        return np.array([p.drive_e ** 2 / (p.kappa ** 2 + p.delta ** 2)])
    roots = np.roots([c * c, -2 * p.delta * c, p.kappa ** 2 + p.delta ** 2, -p.drive_e ** 2])
    real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots))].real
    return np.sort(real[real >= 0])


def steady_state(params: SystemParams, check_stability: bool = True,
                 max_iter: int = 10_000) -> MeanFieldState:
    """Stationary amplitudes with the modulation switched off.

    Fixed-point iteration on the photon number, started from the uncoupled
    cavity, i.e. the branch reached by switching the drive on adiabatically.
    Other branches of a multistable operating point are ignored; an
    iteration that keeps hopping between branches raises NoConvergence.
    """
    p = params.replace(mod_eps=0.0)
    if p.drive_e == 0.0:
        state = MeanFieldState()
    else:
        s = 1.0 / p.omega_m + 1.0 / p.omega_m2
        gs = p.g ** 2 * s
        n = p.drive_e ** 2 / (p.kappa ** 2 + p.delta ** 2)
        for _ in range(max_iter):
            n_new = p.drive_e ** 2 / (p.kappa ** 2 + (p.delta - gs * n) ** 2)
            if abs(n_new - n) <= 1e-14 * max(1.0, n_new):
                n = n_new
                break
            n = n_new
        else:
            raise NoConvergence(f"photon-number iteration did not settle in {max_iter} steps")
        for _ in range(5):
            f = n * (p.kappa ** 2 + (p.delta - gs * n) ** 2) - p.drive_e ** 2
            df = p.kappa ** 2 + (p.delta - gs * n) ** 2 - 2 * n * gs * (p.delta - gs * n)
            n -= f / df
        q1 = p.g * n / p.omega_m
        q2 = p.g * n / p.omega_m2
        alpha = p.drive_e / (p.kappa + 1j * (p.delta - p.g * (q1 + q2)))
        state = MeanFieldState(abs(alpha), 0.0, q1, 0.0, q2, 0.0, drive_phase=-cmath.phase(alpha))
        residual = np.linalg.norm(classical_rhs(state, 0.0, p))
        if residual > 1e-12 * max(1.0, p.drive_e):
            raise NoConvergence(f"steady-state residual {residual:.3e} above 1e-12")
    if check_stability:
        A = model.build_drift_matrix(params, effective_coupling(state, params), 0.0)
        growth = np.linalg.eigvals(A).real.max()
        if growth > 0:
            raise Unstable(f"drift matrix at the operating point has growth rate {growth:.3e}")
    return state


def effective_coupling(state: MeanFieldState, params: SystemParams) -> float:
    """Linearized coupling G = sqrt(2) * g * |alpha|."""
    return math.sqrt(2.0) * params.g * abs(state.alpha)


def integrate_meanfield(
    initial: MeanFieldState,
    t_span,
    params: SystemParams,
    dt: float | None = None,
    t_eval=None,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> Trajectory:
    """Integrate the classical equations and sample on a uniform grid.

    Pass either ``dt`` (grid spacing) or an explicit ``t_eval``.
    """
    t0, t1 = map(float, t_span)
    if t_eval is None:
        t_eval = sample_grid(t0, t1, dt if dt is not None else (t1 - t0) / 1000)
    drive = params.drive_e * cmath.exp(1j * initial.drive_phase)
    sol = integrate(
        lambda t, y: _rhs_array(t, y, params, drive),
        (t0, t1), initial.as_array(), np.asarray(t_eval), rtol, atol,
    )
    traj = Trajectory(sol.t, sol.y.T.copy())
    traj.drive_phase = initial.drive_phase
    return traj


def state_at(traj: Trajectory, i: int) -> MeanFieldState:
    return MeanFieldState.from_array(traj.states[i], getattr(traj, "drive_phase", 0.0))


def periodic_orbit(
    params: SystemParams,
    initial: MeanFieldState | None = None,
    warmup_periods: int = 20,
    samples: int = 400,
    tol: float = 1e-10,
) -> Trajectory:
    """Late-time periodic orbit of the modulated means, found by shooting.

    Integrates ``warmup_periods`` modulation periods from ``initial``
    (default: the unmodulated steady state), then solves
    y(t0 + T) = y(t0) for the start point with a Newton-type solver.
    Returns one period ``T = pi/Omega`` sampled at ``samples`` points
    (endpoint excluded), starting at a multiple of T.
    """
    if initial is None:
        initial = steady_state(params)
    if params.mod_eps == 0.0 or params.mod_omega == 0.0:
        period = 2 * math.pi / params.omega_m
    else:
        period = params.mod_period
    t0 = warmup_periods * period
    drive = params.drive_e * cmath.exp(1j * initial.drive_phase)
    fun = lambda t, y: _rhs_array(t, y, params, drive)
    y0 = initial.as_array()
    if warmup_periods:
        y0 = integrate(fun, (0.0, t0), y0, None, 1e-10, 1e-12).y[:, -1]

    def poincare(y):
        return integrate(fun, (t0, t0 + period), y, None, 1e-11, 1e-13).y[:, -1]

    y_star, info, ier, msg = fsolve(lambda y: poincare(y) - y, y0, full_output=True, xtol=1e-12)
    resid = np.abs(poincare(y_star) - y_star).max()
    if ier != 1 and resid > tol * max(1.0, np.abs(y_star).max()):
        raise StepFailure(f"periodic-orbit shooting failed: {msg} (residual {resid:.2e})")
    grid = t0 + period * np.arange(samples) / samples
    sol = integrate(fun, (t0, t0 + period), y_star, grid, 1e-11, 1e-13)
    traj = Trajectory(sol.t, sol.y.T.copy(), {"period": period, "residual": resid})
    traj.drive_phase = initial.drive_phase
    return traj


def orbit_area(q, p) -> float:
    """Area enclosed by a closed sampled curve (shoelace formula)."""
    q = np.asarray(q)
    p = np.asarray(p)
    return 0.5 * abs(np.dot(q, np.roll(p, -1)) - np.dot(p, np.roll(q, -1)))


def write_meanfield_csv(path, traj: Trajectory):
    cols = {"t": traj.t}
    for i, name in enumerate(MEANFIELD_COLUMNS):
        cols[name] = traj.states[:, i]
    return write_csv(path, cols)

"""Truncated Fock-space master-equation solver for cavity + two mirrors.

Mode order in the tensor product is (cavity, mirror 1, mirror 2).  The
right-hand side is applied to the density matrix directly with sparse
operators; no superoperator is ever formed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp

from . import model
from .errors import ConfigError, DimensionMismatch, TruncationLeak
from .model import ZERO_POINT, SystemParams
from .trajectory import Trajectory, integrate, sample_grid

MODES = {"cav": 0, "m1": 1, "m2": 2}
DEFAULT_BUDGET = 20_000


@dataclass(frozen=True)
class FockConfig:
    n_cav: int = 8
    n_m1: int = 6
    n_m2: int = 6
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        dims = self.dims
        if any(int(d) != d or d < 2 for d in dims):
            raise ConfigError(f"Fock truncations must be integers >= 2, got {dims}")
        if math.prod(dims) > self.budget:
            raise ConfigError(f"total dimension {math.prod(dims)} exceeds budget {self.budget}")

    @property
    def dims(self) -> tuple:
        return (self.n_cav, self.n_m1, self.n_m2)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)


@dataclass
class DensityOperator:
    """Dense density matrix together with its tensor-factor dimensions."""

    matrix: np.ndarray
    dims: tuple

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.dims = tuple(int(d) for d in self.dims)
        n = math.prod(self.dims)
        if self.matrix.shape != (n, n):
            raise DimensionMismatch(f"matrix {self.matrix.shape} does not match dims {self.dims}")

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))


# -- operators -------------------------------------------------------------

def destroy(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n)), 1, shape=(n, n), format="csr", dtype=complex)


def _embed(op, k: int, dims) -> sp.csr_matrix:
    factors = [sp.identity(d, dtype=complex, format="csr") for d in dims]
    factors[k] = op
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), factors)


@dataclass(frozen=True)
class Operators:
    a: sp.csr_matrix
    b1: sp.csr_matrix
    b2: sp.csr_matrix
    identity: sp.csr_matrix

    @staticmethod
    def quadratures(c):
        q = (c + c.getH()) / math.sqrt(2)
        p = (c - c.getH()) / (1j * math.sqrt(2))
        return q.tocsr(), p.tocsr()

    @property
    def x(self):
        return self.quadratures(self.a)[0]

    @property
    def y(self):
        return self.quadratures(self.a)[1]

    @property
    def q1(self):
        return self.quadratures(self.b1)[0]

    @property
    def p1(self):
        return self.quadratures(self.b1)[1]

    @property
    def q2(self):
        return self.quadratures(self.b2)[0]

    @property
    def p2(self):
        return self.quadratures(self.b2)[1]


def build_operators(cfg: FockConfig) -> Operators:
    """Annihilation operators of the three modes on the full product space."""
    dims = cfg.dims
    return Operators(
        a=_embed(destroy(dims[0]), 0, dims),
        b1=_embed(destroy(dims[1]), 1, dims),
        b2=_embed(destroy(dims[2]), 2, dims),
        identity=sp.identity(cfg.dim, dtype=complex, format="csr"),
    )


def _hamiltonian_parts(params: SystemParams, ops: Operators):
    """Static Hamiltonian and the operator multiplying sin^2(Omega t)."""
    p = params
    a = ops.a
    n_a = (a.getH() @ a).tocsr()
    q1, p1, q2, p2 = ops.q1, ops.p1, ops.q2, ops.p2
    h0 = (
        p.delta * n_a
        + 0.5 * p.omega_m * (p1 @ p1 + q1 @ q1)
        + 0.5 * p.omega_m2 * (p2 @ p2 + q2 @ q2)
        - p.g * (n_a @ (q1 + q2))
        + 1j * p.drive_e * (a.getH() - a)
    )
    h_mod = 0.5 * p.omega_m * p.mod_eps * (q1 @ q1)
    return h0.tocsr(), h_mod.tocsr()


def build_hamiltonian(params: SystemParams, cfg: FockConfig, t: float, ops: Operators | None = None):
    """Sparse H(t) including the stiffness modulation of mirror 1."""
    ops = ops or build_operators(cfg)
    h0, h_mod = _hamiltonian_parts(params, ops)
    return (h0 + math.sin(params.mod_omega * t) ** 2 * h_mod).tocsr()


class _Generator:
    """Precomputed pieces of the master-equation right-hand side.

    d(rho)/dt = -i (H_eff rho - rho H_eff^dag) + sum_k 2 c_k L_k rho L_k^dag
    with H_eff = H(t) - i sum_k c_k L_k^dag L_k.
    """

    def __init__(self, params: SystemParams, cfg: FockConfig, ops: Operators | None = None):
        self.params = params
        self.dim = cfg.dim
        ops = ops or build_operators(cfg)
        h0, self.h_mod = _hamiltonian_parts(params, ops)
        jumps = [(params.kappa, ops.a), (params.gamma_m1, ops.b1), (params.gamma_m2, ops.b2)]
        self.jumps = [(c, L.tocsr(), L.getH().tocsr()) for c, L in jumps if c != 0.0]
        damp = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for c, L, Ld in self.jumps:
            damp = damp + c * (Ld @ L)
        self.h_eff0 = (h0 - 1j * damp).tocsr()
        self.nfev = 0

    def h_eff(self, t):
        s2 = math.sin(self.params.mod_omega * t) ** 2
        if s2 == 0.0 or self.h_mod.nnz == 0:
            return self.h_eff0
        return self.h_eff0 + s2 * self.h_mod

    def apply(self, t, rho: np.ndarray) -> np.ndarray:
        K = self.h_eff(t)
        Krho = K @ rho
        # rho @ K^dag == (K @ rho^dag)^dag
        out = -1j * (Krho - (K @ rho.conj().T).conj().T)
        for c, L, Ld in self.jumps:
            Lrho = L @ rho
            out += 2 * c * (L.conj() @ Lrho.T).T
        return out

    def apply_hermitian(self, t, rho: np.ndarray) -> np.ndarray:
        """Same as :meth:`apply` for Hermitian rho, with half the products."""
        X = -1j * (self.h_eff(t) @ rho)
        for c, L, Ld in self.jumps:
            # L rho L^dag is Hermitian; split it evenly between X and X^dag
            X += c * (L.conj() @ (L @ rho).T).T
        return X + X.conj().T

    def __call__(self, t, y):
        self.nfev += 1
        return self.apply_hermitian(t, y.reshape(self.dim, self.dim)).ravel()


def lindblad_rhs(rho: DensityOperator, t: float, params: SystemParams, cfg: FockConfig) -> np.ndarray:
    """Master-equation time derivative of ``rho`` (commutator sign -i[H, rho])."""
    if rho.dims != cfg.dims:
        raise DimensionMismatch(f"state dims {rho.dims} != config dims {cfg.dims}")
    return _Generator(params, cfg).apply(t, rho.matrix)


def _top_level_populations(rho: np.ndarray, dims) -> np.ndarray:
    diag = np.real(np.diag(rho)).reshape(dims)
    out = []
    for k in range(len(dims)):
        axes = tuple(i for i in range(len(dims)) if i != k)
        out.append(diag.sum(axis=axes)[-1])
    return np.array(out)


def integrate_master_equation(
    rho0: DensityOperator,
    t_span,
    params: SystemParams,
    cfg: FockConfig,
    dt: float | None = None,
    t_eval=None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    leak_tol: float = 1e-3,
) -> Trajectory:
    """Integrate the master equation and sample on a grid.

    Samples are re-Hermitized and renormalized.  If the top Fock level of any
    mode carries more than ``leak_tol`` population a :class:`TruncationLeak`
    warning is issued and the first offending time is stored in
    ``observables["leak_time"]``.
    """
    if rho0.dims != cfg.dims:
        raise DimensionMismatch(f"state dims {rho0.dims} != config dims {cfg.dims}")
    t0, t1 = map(float, t_span)
    if t_eval is None:
        t_eval = sample_grid(t0, t1, dt if dt is not None else (t1 - t0) / 200)
    gen = _Generator(params, cfg)
    sol = integrate(gen, (t0, t1), rho0.matrix.ravel(), np.asarray(t_eval), rtol, atol)
    n = cfg.dim
    states = sol.y.T.reshape(-1, n, n)
    states = 0.5 * (states + states.conj().transpose(0, 2, 1))
    states /= np.trace(states, axis1=1, axis2=2).real[:, None, None]
    leaks = np.array([_top_level_populations(r, cfg.dims) for r in states])
    bad = np.nonzero(leaks.max(axis=1) > leak_tol)[0]
    leak_time = None
    if bad.size:
        leak_time = float(sol.t[bad[0]])
        warnings.warn(TruncationLeak(
            f"top Fock level population {leaks[bad[0]].max():.2e} > {leak_tol} at t={leak_time:.6g}",
            time=leak_time, populations=leaks[bad[0]],
        ), stacklevel=2)
    traj = Trajectory(sol.t, states, {"leak_time": leak_time, "top_populations": leaks, "nfev": gen.nfev})
    traj.dims = cfg.dims
    return traj


# -- states ----------------------------------------------------------------

def fock_ket(n: int, k: int) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[k] = 1.0
    return v


def coherent_ket(n: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state (Poisson amplitudes, renormalized)."""
    k = np.arange(n)
    logfact = np.array([math.lgamma(i + 1) for i in k])
    amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * np.power(complex(alpha), k)
    return amp / np.linalg.norm(amp)


def thermal_dm(n: int, nbar: float) -> np.ndarray:
    if nbar == 0:
        p = np.zeros(n)
        p[0] = 1.0
    else:
        p = (nbar / (1 + nbar)) ** np.arange(n) / (1 + nbar)
        p /= p.sum()
    return np.diag(p).astype(complex)


def ket_to_dm(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def product_state(*factors) -> DensityOperator:
    """Tensor product of single-mode kets or density matrices."""
    mats = [ket_to_dm(f) if np.ndim(f) == 1 else np.asarray(f, dtype=complex) for f in factors]
    return DensityOperator(reduce(np.kron, mats), tuple(m.shape[0] for m in mats))


def displaced_vacuum(n: int, q: float, p: float) -> np.ndarray:
    """Coherent ket with quadrature means (q, p)."""
    return coherent_ket(n, (q + 1j * p) / math.sqrt(2))


# -- observables -----------------------------------------------------------

def expectation(rho: DensityOperator | np.ndarray, op) -> complex:
    """Tr(rho op)."""
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    if op.shape != m.shape:
        raise DimensionMismatch(f"operator {op.shape} vs state {m.shape}")
    if sp.issparse(op):
        return complex(op.multiply(m.T).sum())
    return complex(np.einsum("ij,ji->", m, op))


def _resolve_keep(keep, n_modes):
    if isinstance(keep, (str, int)):
        keep = (keep,)
    idx = sorted({MODES[k] if isinstance(k, str) else int(k) for k in keep})
    if not idx or len(idx) >= n_modes or idx[0] < 0 or idx[-1] >= n_modes:
        raise DimensionMismatch(f"keep={keep} must be a nonempty proper subset of {n_modes} modes")
    return idx


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    """Reduced state on the modes in ``keep`` (names 'cav', 'm1', 'm2' or indices)."""
    dims = rho.dims
    k = len(dims)
    idx = _resolve_keep(keep, k)
    t = rho.matrix.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:k])
    col = list(letters[k:2 * k])
    for i in range(k):
        if i not in idx:
            col[i] = row[i]
    out = "".join(row[i] for i in idx) + "".join(col[i] for i in idx)
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = math.prod(dims[i] for i in idx)
    return DensityOperator(red.reshape(d, d), tuple(dims[i] for i in idx))


def partial_transpose(rho2: DensityOperator) -> np.ndarray:
    """Transpose on the first of two tensor factors."""
    if len(rho2.dims) != 2:
        raise DimensionMismatch("partial transpose needs a two-mode state")
    da, db = rho2.dims
    t = rho2.matrix.reshape(da, db, da, db).transpose(2, 1, 0, 3)
    return t.reshape(da * db, da * db)


def log_negativity_dm(rho2: DensityOperator) -> float:
    """log2 of the trace norm of the partial transpose (bits)."""
    pt = partial_transpose(rho2)
    pt = 0.5 * (pt + pt.conj().T)
    norm = np.abs(np.linalg.eigvalsh(pt)).sum()
    return max(0.0, math.log2(norm))


def von_neumann_entropy_dm(rho: DensityOperator | np.ndarray) -> float:
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    lam = lam[lam > 1e-15]
    return float(-(lam * np.log2(lam)).sum())


def mutual_information_dm(rho2: DensityOperator) -> float:
    if len(rho2.dims) != 2:
        raise DimensionMismatch("mutual information needs a two-mode state")
    s_a = von_neumann_entropy_dm(partial_trace(rho2, 0))
    s_b = von_neumann_entropy_dm(partial_trace(rho2, 1))
    return s_a + s_b - von_neumann_entropy_dm(rho2)


def _single_mode_ops(d):
    c = destroy(d).toarray()
    q = (c + c.conj().T) / math.sqrt(2)
    p = (c - c.conj().T) / (1j * math.sqrt(2))
    return q, p


def mirror_moments(rho_m: DensityOperator) -> tuple:
    """Means (q1, p1, q2, p2) and their 4x4 symmetrized covariance from a
    two-mirror state."""
    d1, d2 = rho_m.dims
    q, p = _single_mode_ops(d1)
    q_, p_ = _single_mode_ops(d2)
    i1, i2 = np.eye(d1), np.eye(d2)
    ops = [np.kron(q, i2), np.kron(p, i2), np.kron(i1, q_), np.kron(i1, p_)]
    m = rho_m.matrix
    mean = np.array([np.einsum("ij,ji->", m, o).real for o in ops])
    cov = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            sym = 0.5 * (ops[i] @ ops[j] + ops[j] @ ops[i])
            cov[i, j] = cov[j, i] = np.einsum("ij,ji->", m, sym).real - mean[i] * mean[j]
    return mean, cov


def dm_observables(rho: DensityOperator, include_means: bool = False) -> dict:
    """Mirror observables of a three-mode state, evaluated on the density matrix."""
    rho_m = partial_trace(rho, ("m1", "m2"))
    mean, cov = mirror_moments(rho_m)
    var_minus = 0.5 * (cov[0, 0] + cov[2, 2] - 2 * cov[0, 2] + cov[1, 1] + cov[3, 3] - 2 * cov[1, 3])
    if include_means:
        var_minus += 0.5 * ((mean[0] - mean[2]) ** 2 + (mean[1] - mean[3]) ** 2)
    return {
        "var_q1_ratio": cov[0, 0] / ZERO_POINT,
        "var_q2_ratio": cov[2, 2] / ZERO_POINT,
        "sync": 1.0 / var_minus,
        "log_neg": log_negativity_dm(rho_m),
        "mutual_info": max(0.0, mutual_information_dm(rho_m)),
    }


def observable_series(traj: Trajectory, include_means: bool = False) -> dict:
    dims = getattr(traj, "dims")
    rows = [dm_observables(DensityOperator(m, dims), include_means) for m in traj.states]
    cols = {"t": np.asarray(traj.t)}
    for key in rows[0]:
        cols[key] = np.array([r[key] for r in rows])
    return cols


def write_dm_snapshot(path, rho: DensityOperator):
    """Density matrix as text: one row per line, 're im' pairs separated by spaces."""
    m = rho.matrix
    with open(path, "w") as fh:
        fh.write(f"# dims {' '.join(map(str, rho.dims))}\n")
        for row in m:
            fh.write(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row) + "\n")


def read_dm_snapshot(path) -> DensityOperator:
    with open(path) as fh:
        dims = tuple(int(x) for x in fh.readline().split()[2:])
        data = np.loadtxt(fh, ndmin=2)
    return DensityOperator(data[:, 0::2] + 1j * data[:, 1::2], dims)

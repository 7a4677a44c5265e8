"""Physical parameters and the linear drift/diffusion matrices.

All quantities are dimensionless, with the mechanical frequency of mirror 1
as the unit.  The fluctuation basis is ordered (dx, dy, dq1, dp1, dq2, dp2)
with quadratures x = (a + a^dag)/sqrt(2), so every vacuum variance is 1/2.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

#: Variance of any quadrature in the vacuum state.
ZERO_POINT = 0.5

#: "symmetric": mirrors damped on q and p at rate gamma with matching noise,
#: the Gaussian image of the b-mode dissipator in the master equation.
#: "momentum": damping and noise on p only (Brownian-motion form); not
#: completely positive, so the covariance can dip below the uncertainty
#: bound by O(gamma/omega_m).
DAMPING_MODELS = ("symmetric", "momentum")


@dataclass(frozen=True)
class SystemParams:
    """Rates, drive and modulation settings of the two-mirror cavity.

    Defaults are the reference working point: omega_m = 1, delta = 1,
    kappa = 0.1, gamma = 0.001, g = 0.05, Omega = 0.5, eps = 0.5, E = 2.1,
    at zero temperature.  ``mechanical_damping`` selects the dissipation
    model of the mirror fluctuations, see :data:`DAMPING_MODELS`.
    """

    omega_m: float = 1.0
    delta_m: float = 0.0
    delta: float = 1.0
    kappa: float = 0.1
    gamma_m1: float = 0.001
    gamma_m2: float = 0.001
    g: float = 0.05
    drive_e: float = 2.1
    mod_omega: float = 0.5
    mod_eps: float = 0.5
    n_ph: float = 0.0
    n_m1: float = 0.0
    n_m2: float = 0.0
    mechanical_damping: str = "symmetric"

    def __post_init__(self):
        if self.mechanical_damping not in DAMPING_MODELS:
            raise ConfigError(
                f"mechanical_damping must be one of {DAMPING_MODELS}, got {self.mechanical_damping!r}"
            )
        for f in dataclasses.fields(self):
            if f.name == "mechanical_damping":
                continue
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{f.name} must be a finite number, got {v!r}")
            object.__setattr__(self, f.name, float(v))

    def validate(self) -> "SystemParams":
        """Check the physical invariants; returns self so it chains.

        Construction alone does not validate because the matrix builders are
        also used in degenerate limits (zero damping, zero frequency).
        """
        problems = []
        if self.kappa <= 0:
            problems.append("kappa must be > 0")
        if self.gamma_m1 <= 0 or self.gamma_m2 <= 0:
            problems.append("gamma_m1 and gamma_m2 must be > 0")
        if self.omega_m <= 0:
            problems.append("omega_m must be > 0")
        if self.omega_m + self.delta_m <= 0:
            problems.append("omega_m + delta_m must be > 0")
        if self.mod_eps < 0:
            problems.append("mod_eps must be >= 0")
        if min(self.n_ph, self.n_m1, self.n_m2) < 0:
            problems.append("thermal occupancies must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def omega_m2(self) -> float:
        return self.omega_m + self.delta_m

    @property
    def mod_period(self) -> float:
        """Period pi/Omega of the stiffness modulation (inf when Omega = 0)."""
        return math.pi / self.mod_omega if self.mod_omega else math.inf

    @property
    def tau(self) -> float:
        """Time unit 2*pi/Omega used on every time axis of the reports."""
        return 2 * math.pi / self.mod_omega

    def replace(self, **changes) -> "SystemParams":
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PARAM_NAMES = tuple(f.name for f in dataclasses.fields(SystemParams))


def parse_value(text: str):
    """Parse a scalar from a config file or ``--set`` flag."""
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def read_config(path) -> dict:
    """Read a flat key/value config.

    Either a JSON object, or one ``key = value`` per line with ``#``
    comments.  Values are parsed as JSON scalars where possible.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise ConfigError(f"{path}: config must be a flat JSON object")
        return data
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def params_from_mapping(mapping: dict, base: SystemParams | None = None) -> SystemParams:
    """Overlay the recognised keys of ``mapping`` onto ``base`` (defaults if None)."""
    base = base or SystemParams()
    unknown = set(mapping) - set(PARAM_NAMES)
    if unknown:
        raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    return base.replace(**mapping)


def load_params(path) -> SystemParams:
    return params_from_mapping(read_config(path))


def modulation_factor(params: SystemParams, t: float) -> float:
    """Stiffness multiplier 1 + eps*sin^2(Omega*t) of mirror 1."""
    return 1.0 + params.mod_eps * math.sin(params.mod_omega * t) ** 2


def build_drift_matrix(params: SystemParams, coupling_g_eff: float, t: float) -> np.ndarray:
    """Drift matrix A(t) of the linearized fluctuations.

    Row 2 follows the fluctuation equation dy' = -delta*dx + ..., so entry
    (2,1) is -delta.  Only entry (4,3) depends on time.  With symmetric
    mechanical damping the q rows also carry -gamma on the diagonal.
    """
    p = params
    G = coupling_g_eff
    w2 = p.omega_m2
    A = np.zeros((6, 6))
    A[0, 0] = -p.kappa
    A[0, 1] = p.delta
    A[1, 0] = -p.delta
    A[1, 1] = -p.kappa
    A[1, 2] = G
    A[1, 4] = G
    A[2, 3] = p.omega_m
    A[3, 0] = G
    A[3, 2] = -p.omega_m * modulation_factor(p, t)
    A[3, 3] = -p.gamma_m1
    A[4, 5] = w2
    A[5, 0] = G
    A[5, 4] = -w2
    A[5, 5] = -p.gamma_m2
    if p.mechanical_damping == "symmetric":
        A[2, 2] = -p.gamma_m1
        A[4, 4] = -p.gamma_m2
    return A


def build_diffusion_matrix(params: SystemParams) -> np.ndarray:
    """Diagonal noise matrix; the q entries are zero for momentum damping."""
    p = params
    m1 = p.gamma_m1 * (2 * p.n_m1 + 1)
    m2 = p.gamma_m2 * (2 * p.n_m2 + 1)
    sym = p.mechanical_damping == "symmetric"
    return np.diag([
        p.kappa * (2 * p.n_ph + 1),
        p.kappa * (2 * p.n_ph + 1),
        m1 if sym else 0.0,
        m1,
        m2 if sym else 0.0,
        m2,
    ])

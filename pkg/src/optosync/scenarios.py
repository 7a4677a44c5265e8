"""Scenario pipelines: run the solvers, write CSV tables, SVG figures and a
JSON run report into an output directory."""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import math
import subprocess
import time
import warnings
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from . import gaussian as ga
from . import lindblad as lb
from . import meanfield as mf
from .errors import ConfigError, TruncationLeak
from .model import PARAM_NAMES, SystemParams, params_from_mapping
from .plotting import emit_plot
from .trajectory import sample_grid, write_csv

SCENARIOS = ("squeeze", "oscillations", "phase-portrait", "sync", "correlations",
             "detuning-sweep", "validate")
SOLVERS = ("gaussian", "lindblad", "both")

#: Runs shorter than this many tau are padded for the late-time window.
DEFAULT_T_FINAL_TAU = {
    "squeeze": 40.0,
    "oscillations": 40.0,
    "phase-portrait": 2.0,
    "sync": 40.0,
    "correlations": 40.0,
    "detuning-sweep": 1.0,
    "validate": 3.0,
}
DEFAULT_SAMPLES_PER_TAU = {"validate": 16}
PORTRAIT_DETUNINGS = (0.0, 0.05, 0.1)
VALIDATE_COLUMNS = ("var_q1_ratio", "var_q2_ratio", "sync", "log_neg", "mutual_info")


@dataclass
class Scenario:
    """One CLI run.  Times are in natural units (1/omega_m)."""

    name: str
    params: SystemParams = field(default_factory=SystemParams)
    solver: str = "gaussian"
    t_final: float | None = None
    sample_dt: float | None = None
    output_dir: Path = Path("optosync-out")
    fock: lb.FockConfig | None = None
    include_means: bool = False
    init_n_cav: float = 0.0
    init_n_m1: float = 0.0
    init_n_m2: float = 0.0
    rtol_cov: float = 1e-8
    rtol_meanfield: float = 1e-9
    rtol_master: float = 1e-8
    baseline_stretch: float = 80.0
    sweep_max: float = 0.1
    sweep_step: float = 0.01
    validate_drive: float = 0.98
    validate_tolerance: float = 0.1
    workers: int = 1
    plots: bool = True

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        tau = self.params.tau
        if self.t_final is None:
            self.t_final = DEFAULT_T_FINAL_TAU[self.name] * tau
        if self.sample_dt is None:
            self.sample_dt = tau / DEFAULT_SAMPLES_PER_TAU.get(self.name, 64)
        if not self.sample_dt > 0:
            raise ConfigError("sample_dt must be > 0")
        if not self.t_final > self.sample_dt:
            raise ConfigError("t_final must exceed sample_dt")
        if self.fock is None and self.name == "validate":
            self.fock = lb.FockConfig(8, 8, 5)
        if self.solver in ("lindblad", "both") and self.fock is None:
            raise ConfigError("solver=lindblad needs a Fock truncation (fock_cav, fock_m1, fock_m2)")
        self.output_dir = Path(self.output_dir)
        self.params.validate()

    @property
    def tau(self) -> float:
        return self.params.tau

    def settings(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, SystemParams):
                v = v.to_dict()
            elif isinstance(v, lb.FockConfig):
                v = dataclasses.asdict(v)
            elif isinstance(v, Path):
                v = str(v)
            out[f.name] = v
        return out


SCENARIO_KEYS = {
    "t_final": float, "sample_dt": float, "include_means": bool,
    "init_n_cav": float, "init_n_m1": float, "init_n_m2": float,
    "rtol_cov": float, "rtol_meanfield": float, "rtol_master": float,
    "baseline_stretch": float, "sweep_max": float, "sweep_step": float,
    "validate_drive": float, "validate_tolerance": float, "workers": int, "plots": bool,
}
FOCK_KEYS = ("fock_cav", "fock_m1", "fock_m2", "fock_budget")


def _coerce(key, value, kind):
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        if value in (0, 1):
            return bool(value)
        raise ConfigError(f"{key} must be a boolean, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}") from None


def scenario_from_mapping(name: str, mapping: dict, output_dir=None, solver=None) -> Scenario:
    """Build a Scenario from flat config keys (parameters, scenario and Fock keys)."""
    mapping = dict(mapping)
    solver = solver or mapping.pop("solver", "gaussian")
    mapping.pop("solver", None)
    out = output_dir or mapping.pop("output_dir", "optosync-out")
    mapping.pop("output_dir", None)
    param_part = {k: mapping.pop(k) for k in list(mapping) if k in PARAM_NAMES}
    fock_part = {k: mapping.pop(k) for k in list(mapping) if k in FOCK_KEYS}
    extra = {}
    for k in list(mapping):
        if k in SCENARIO_KEYS:
            extra[k] = _coerce(k, mapping.pop(k), SCENARIO_KEYS[k])
    if mapping:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(mapping))}")
    params = params_from_mapping(param_part)
    fock = None
    if fock_part or solver in ("lindblad", "both"):
        try:
            fock = lb.FockConfig(
                int(fock_part.get("fock_cav", 8)), int(fock_part.get("fock_m1", 8)),
                int(fock_part.get("fock_m2", 5)), int(fock_part.get("fock_budget", lb.DEFAULT_BUDGET)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return Scenario(name=name, params=params, solver=solver, output_dir=Path(out), fock=fock, **extra)


def version_string() -> str:
    """git-describe of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# -- solver pipelines --------------------------------------------------------

@dataclass
class GaussianRun:
    means: object
    cov: object
    observables: dict
    coupling: float
    steady: mf.MeanFieldState


def gaussian_run(sc: Scenario, params: SystemParams | None = None, t_final=None, dt=None) -> GaussianRun:
    """Means from the unmodulated steady state, covariance from the initial
    occupancies, both propagated on a common uniform grid."""
    params = params or sc.params
    t_final = t_final or sc.t_final
    grid = sample_grid(0.0, t_final, dt or sc.sample_dt)
    steady = mf.steady_state(params)
    G = mf.effective_coupling(steady, params)
    means = mf.integrate_meanfield(steady, (0.0, t_final), params, t_eval=grid, rtol=sc.rtol_meanfield)
    sigma0 = ga.initial_covariance(sc.init_n_cav, sc.init_n_m1, sc.init_n_m2)
    cov = ga.propagate_covariance(sigma0, (0.0, t_final), params, G, t_eval=grid, rtol=sc.rtol_cov)
    obs = ga.observable_series(cov, means if sc.include_means else None)
    return GaussianRun(means, cov, obs, G, steady)


def _displaced_thermal(n: int, q: float, p: float, nbar: float) -> np.ndarray:
    if nbar == 0:
        return lb.ket_to_dm(lb.displaced_vacuum(n, q, p))
    big = n + 40
    c = lb.destroy(big).toarray()
    beta = (q + 1j * p) / math.sqrt(2)
    D = expm(beta * c.conj().T - np.conj(beta) * c)
    rho = D @ lb.thermal_dm(big, nbar) @ D.conj().T
    rho = rho[:n, :n]
    return rho / np.trace(rho).real


def initial_density(sc: Scenario, steady: mf.MeanFieldState) -> lb.DensityOperator:
    """Product state matching the Gaussian initial condition (lab-frame phase)."""
    nc, n1, n2 = sc.fock.dims
    alpha_lab = steady.alpha * complex(math.cos(steady.drive_phase), -math.sin(steady.drive_phase))
    return lb.product_state(
        _displaced_thermal(nc, alpha_lab.real * math.sqrt(2), alpha_lab.imag * math.sqrt(2), sc.init_n_cav),
        _displaced_thermal(n1, steady.q1, steady.p1, sc.init_n_m1),
        _displaced_thermal(n2, steady.q2, steady.p2, sc.init_n_m2),
    )


@dataclass
class LindbladRun:
    traj: object
    observables: dict
    leak_time: float | None


def lindblad_run(sc: Scenario, params: SystemParams | None = None, t_final=None, dt=None) -> LindbladRun:
    params = params or sc.params
    t_final = t_final or sc.t_final
    grid = sample_grid(0.0, t_final, dt or sc.sample_dt)
    steady = mf.steady_state(params)
    rho0 = initial_density(sc, steady)
    with warnings.catch_warnings():
        warnings.simplefilter("always", TruncationLeak)
        traj = lb.integrate_master_equation(rho0, (0.0, t_final), params, sc.fock, t_eval=grid,
                                            rtol=sc.rtol_master)
    obs = lb.observable_series(traj, sc.include_means)
    return LindbladRun(traj, obs, traj.observables["leak_time"])


def _late(cols: dict, t_start: float) -> dict:
    mask = np.asarray(cols["t"]) >= t_start - 1e-9
    return {k: np.asarray(v)[mask] for k, v in cols.items()}


def first_crossing(t, values, threshold):
    idx = np.nonzero(np.asarray(values) > threshold)[0]
    return float(np.asarray(t)[idx[0]]) if idx.size else None


def _covariance_invariants(cov) -> dict:
    nus = np.array([ga.min_symplectic_eigenvalue(s) for s in cov.states])
    unc = np.array([ga.uncertainty_products(s).min() for s in cov.states])
    return {"min_symplectic_eigenvalue": float(nus.min()), "min_uncertainty_product": float(unc.min())}


def _density_invariants(traj) -> dict:
    tr = [abs(np.trace(m) - 1) for m in traj.states]
    herm = [np.abs(m - m.conj().T).max() for m in traj.states]
    eig = [np.linalg.eigvalsh(m).min() for m in traj.states]
    return {"max_trace_error": float(max(tr)), "max_hermiticity_error": float(max(herm)),
            "min_eigenvalue": float(min(eig))}


class _Writer:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.files = []
        sc.output_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name, columns):
        self.files.append(str(write_csv(self.sc.output_dir / name, columns).name))

    def plot(self, name, table, kind, **kw):
        if self.sc.plots:
            self.files.append(str(emit_plot(table, kind, self.sc.output_dir / name, **kw).name))


def _squeeze(sc, w):
    metrics = {}
    late_start = sc.t_final - sc.tau
    ratios = ("var_q1_ratio", "var_q2_ratio")
    solvers = [s for s in ("gaussian", "lindblad") if sc.solver in (s, "both")]
    for solver in solvers:
        if solver == "gaussian":
            run = gaussian_run(sc)
            cols = run.observables
            metrics["gaussian_invariants"] = _covariance_invariants(run.cov)
            pc = ga.periodic_covariance(sc.params, run.coupling)
            metrics["gaussian_periodic_min_var_q1"] = float(min(ga.quadrature_variance_ratio(s, ga.Q1) for s in pc.states))
            metrics["gaussian_periodic_min_var_q2"] = float(min(ga.quadrature_variance_ratio(s, ga.Q2) for s in pc.states))
        else:
            run = lindblad_run(sc)
            cols = run.observables
            metrics["lindblad_leak_time"] = run.leak_time
        late = _late(cols, late_start)
        table = {"t": late["t"], **{k: late[k] for k in ratios}}
        w.csv(f"squeeze_{solver}.csv", table)
        w.plot(f"squeeze_{solver}.svg", table, "timeseries", y=list(ratios), xscale=sc.tau,
               xlabel="t / tau", ylabel="variance / zero-point", title=f"squeezing ({solver})")
        metrics[f"{solver}_min_var_q1"] = float(late["var_q1_ratio"].min())
        metrics[f"{solver}_min_var_q2"] = float(late["var_q2_ratio"].min())
    return metrics


def _oscillations(sc, w):
    steady = mf.steady_state(sc.params)
    grid = sample_grid(0.0, sc.t_final, sc.sample_dt)
    tr = mf.integrate_meanfield(steady, (0.0, sc.t_final), sc.params, t_eval=grid, rtol=sc.rtol_meanfield)
    mask = tr.t >= sc.t_final - 3 * sc.tau - 1e-9
    q1, q2 = tr.states[mask, 2], tr.states[mask, 4]
    table = {"t": tr.t[mask], "q1": q1, "q2": q2}
    w.csv("oscillations.csv", table)
    w.plot("oscillations.svg", table, "timeseries", y=["q1", "q2"], xscale=sc.tau,
           xlabel="t / tau", ylabel="mean position", title="late-time mirror oscillations")
    return {
        "amplitude_q1": float(np.ptp(q1) / 2), "amplitude_q2": float(np.ptp(q2) / 2),
        "correlation_q1_q2": float(np.corrcoef(q1, q2)[0, 1]),
    }


def _portrait(sc, w):
    metrics = {"areas": {}}
    base = sc.params
    steady = mf.steady_state(base.replace(delta_m=0.0))
    grid = sample_grid(0.0, sc.t_final, sc.sample_dt)
    start = mf.integrate_meanfield(steady, (0.0, sc.t_final), base.replace(delta_m=0.0),
                                   t_eval=grid, rtol=sc.rtol_meanfield)
    table = {"t": start.t, **{n: start.states[:, i + 2] for i, n in enumerate(("q1", "p1", "q2", "p2"))}}
    w.csv("portrait_start.csv", table)
    w.plot("portrait_start.svg", table, "portrait", title="orbits from the start, delta_m = 0")
    for dm in PORTRAIT_DETUNINGS:
        p = base.replace(delta_m=dm)
        orb = mf.periodic_orbit(p)
        s = orb.states
        table = {"t": orb.t, "q1": s[:, 2], "p1": s[:, 3], "q2": s[:, 4], "p2": s[:, 5]}
        tag = f"{dm:g}"
        w.csv(f"portrait_dm{tag}.csv", table)
        w.plot(f"portrait_dm{tag}.svg", table, "portrait", title=f"late-time orbits, delta_m = {tag}")
        metrics["areas"][tag] = {
            "mirror1": mf.orbit_area(s[:, 2], s[:, 3]),
            "mirror2": mf.orbit_area(s[:, 4], s[:, 5]),
            "shooting_residual": orb.observables["residual"],
        }
    return metrics


def _sync(sc, w):
    metrics = {}
    run = gaussian_run(sc)
    table = {"t": run.observables["t"], "sync": run.observables["sync"]}
    w.csv("sync.csv", table)
    base_params = sc.params.replace(mod_eps=0.0)
    stretch = sc.baseline_stretch
    base = gaussian_run(sc, base_params, sc.t_final * stretch, sc.sample_dt * stretch)
    btable = {"t": base.observables["t"], "sync": base.observables["sync"]}
    w.csv("sync_baseline.csv", btable)
    if sc.plots:
        n = min(len(table["t"]), len(btable["t"]))
        plot_table = {"t": table["t"][:n], "modulated": table["sync"][:n], "unmodulated": btable["sync"][:n]}
        w.plot("sync.svg", plot_table, "timeseries", y=["modulated", "unmodulated"], xscale=sc.tau,
               xlabel=f"t / tau  (unmodulated: x{stretch:g} t / tau)", ylabel="S(t)",
               title="synchronization measure")
    late_start = sc.t_final - sc.tau
    late = _late(run.observables, late_start)
    late_base_same_time = _late(base.observables, late_start)
    late_base_same_time = {k: v[late_base_same_time["t"] <= sc.t_final + 1e-9] for k, v in late_base_same_time.items()}
    metrics.update(
        max_sync=float(run.observables["sync"].max()),
        late_mean_sync=float(late["sync"].mean()),
        baseline_late_mean_sync=float(late_base_same_time["sync"].mean()),
        baseline_final_mean_sync=float(_late(base.observables, base.observables["t"][-1] - sc.tau)["sync"].mean()),
        gaussian_invariants=_covariance_invariants(run.cov),
    )
    if sc.solver in ("lindblad", "both"):
        lrun = lindblad_run(sc)
        w.csv("sync_lindblad.csv", {"t": lrun.observables["t"], "sync": lrun.observables["sync"]})
        metrics["lindblad_max_sync"] = float(lrun.observables["sync"].max())
        metrics["lindblad_leak_time"] = lrun.leak_time
    return metrics


def correlation_onsets(cols: dict, late_start: float) -> dict:
    """Onset times of entanglement and synchronization in an observable table."""
    late = _late(cols, late_start)
    en_late = float(late["log_neg"].mean())
    s_late = float(late["sync"].mean())
    t = np.asarray(cols["t"])
    zero = np.nonzero(np.asarray(cols["log_neg"]) <= 0.0)[0]
    return {
        "log_neg_late_mean": en_late,
        "sync_late_mean": s_late,
        "mutual_info_late_mean": float(late["mutual_info"].mean()),
        "log_neg_onset": first_crossing(t, cols["log_neg"], 0.1 * en_late),
        "sync_onset": first_crossing(t, cols["sync"], 0.9 * s_late),
        "log_neg_last_nonpositive": float(t[zero[-1]]) if zero.size else None,
    }


def _correlations(sc, w):
    metrics = {}
    solvers = [s for s in ("gaussian", "lindblad") if sc.solver in (s, "both")]
    for solver in solvers:
        if solver == "gaussian":
            run = gaussian_run(sc)
            cols = run.observables
            metrics["gaussian_invariants"] = _covariance_invariants(run.cov)
        else:
            run = lindblad_run(sc)
            cols = run.observables
            metrics["lindblad_leak_time"] = run.leak_time
        ga.write_observables_csv(sc.output_dir / f"observables_{solver}.csv", cols)
        w.files.append(f"observables_{solver}.csv")
        w.plot(f"correlations_{solver}.svg", cols, "timeseries", y=["log_neg", "mutual_info"],
               xscale=sc.tau, xlabel="t / tau", ylabel="bits", title=f"entanglement and mutual information ({solver})")
        metrics[solver] = correlation_onsets(cols, sc.t_final - 10 * sc.tau)
    return metrics


def late_time_point(params: SystemParams, include_means: bool = False) -> dict:
    """Asymptotic (periodic) observables at one parameter point."""
    steady = mf.steady_state(params)
    G = mf.effective_coupling(steady, params)
    pc = ga.periodic_covariance(params, G, samples=256)
    means = None
    if include_means:
        orb = mf.periodic_orbit(params, samples=256)
        means = orb.states
    obs = ga.observable_series(pc, means)
    return {
        "delta_m": params.delta_m,
        "sync_mean": float(obs["sync"].mean()),
        "sync_min": float(obs["sync"].min()),
        "log_neg_mean": float(obs["log_neg"].mean()),
        "mutual_info_mean": float(obs["mutual_info"].mean()),
        "floquet_radius": ga.floquet_stability(params, G).spectral_radius,
    }


def _sweep_point(args):
    params, include_means = args
    return late_time_point(params, include_means)


def detuning_values(sc: Scenario) -> np.ndarray:
    n = int(round(sc.sweep_max / sc.sweep_step))
    return np.round(np.linspace(0.0, n * sc.sweep_step, n + 1), 12)


def _detuning_sweep(sc, w):
    jobs = [(sc.params.replace(delta_m=float(v)), sc.include_means) for v in detuning_values(sc)]
    if sc.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=sc.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    table = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    w.csv("detuning_sweep.csv", table)
    w.plot("detuning_sweep.svg", table, "sweep", x="delta_m", y=["sync_mean", "sync_min"],
           xlabel="delta_m", ylabel="late-time S", title="robustness against mirror detuning")
    return {"delta_m": table["delta_m"].tolist(), "sync_mean": table["sync_mean"].tolist()}


def relative_sup_error(test, reference) -> float:
    """max |test - reference| / max |reference| over a common grid."""
    test, reference = np.asarray(test), np.asarray(reference)
    scale = np.abs(reference).max()
    diff = np.abs(test - reference).max()
    return float(diff / scale) if scale > 0 else (0.0 if diff == 0 else math.inf)


def _validate(sc, w):
    params = sc.params.replace(drive_e=sc.validate_drive)
    steady = mf.steady_state(params)
    photons = abs(steady.alpha) ** 2
    grun = gaussian_run(sc, params)
    lrun = lindblad_run(sc, params)
    ga.write_observables_csv(sc.output_dir / "observables_gaussian.csv", grun.observables)
    ga.write_observables_csv(sc.output_dir / "observables_lindblad.csv", lrun.observables)
    w.files += ["observables_gaussian.csv", "observables_lindblad.csv"]
    errors = {k: relative_sup_error(lrun.observables[k], grun.observables[k]) for k in VALIDATE_COLUMNS}
    if sc.plots:
        for key in VALIDATE_COLUMNS:
            table = {"t": grun.observables["t"], "gaussian": grun.observables[key],
                     "lindblad": lrun.observables[key]}
            w.plot(f"validate_{key}.svg", table, "timeseries", y=["gaussian", "lindblad"],
                   xscale=sc.tau, xlabel="t / tau", ylabel=key, title=f"cross-solver check: {key}")
    return {
        "drive_e": params.drive_e,
        "photon_number": photons,
        "relative_errors": errors,
        "tolerance": sc.validate_tolerance,
        "leak_time": lrun.leak_time,
        "max_top_population": float(lrun.traj.observables["top_populations"].max()),
        "passed": bool(photons <= 1.0 and lrun.leak_time is None
                       and all(e <= sc.validate_tolerance for e in errors.values())),
        "gaussian_invariants": _covariance_invariants(grun.cov),
        "density_invariants": _density_invariants(lrun.traj),
    }


_PIPELINES = {
    "squeeze": _squeeze,
    "oscillations": _oscillations,
    "phase-portrait": _portrait,
    "sync": _sync,
    "correlations": _correlations,
    "detuning-sweep": _detuning_sweep,
    "validate": _validate,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def run_scenario(sc: Scenario) -> dict:
    """Execute a scenario and write its outputs; returns the run report."""
    w = _Writer(sc)
    started = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationLeak)
        metrics = _PIPELINES[sc.name](sc, w)
    report = {
        "scenario": sc.name,
        "version": version_string(),
        "settings": sc.settings(),
        "tau": sc.tau,
        "metrics": metrics,
        "warnings": [str(c.message) for c in caught],
        "outputs": sorted(set(w.files)),
        "elapsed_s": time.perf_counter() - started,
    }
    report = _jsonable(report)
    (sc.output_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report

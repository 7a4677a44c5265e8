"""Time-series container shared by all solvers, plus CSV helpers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StepFailure


@dataclass
class Trajectory:
    """Samples of a solver state on a time grid.

    ``states`` has the sample index first.  ``observables`` holds derived
    per-sample scalars keyed by column name.
    """

    t: np.ndarray
    states: np.ndarray
    observables: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return self.states[i]


def format_float(x: float) -> str:
    return repr(float(x))


def write_csv(path, columns: dict) -> Path:
    """Write equal-length columns to ``path`` (header row, one row per sample)."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    lengths = {len(d) for d in data}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([format_float(v) for v in row])
    return path


def read_csv(path) -> dict:
    """Read a CSV written by :func:`write_csv` into float arrays by column."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return {}
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [() for _ in header]
    return {h: np.array(c, dtype=float) for h, c in zip(header, cols)}


def sample_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """Uniform grid from t0 to t1 inclusive (last point snapped to t1)."""
    if dt <= 0 or t1 <= t0:
        raise ValueError("need dt > 0 and t1 > t0")
    n = int(np.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(n + 1)
    if t1 - grid[-1] > 1e-9 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def integrate(fun, t_span, y0, t_eval, rtol, atol, method="DOP853", max_step=np.inf):
    """Adaptive Runge-Kutta integration; raises StepFailure instead of returning junk."""
    sol = solve_ivp(
        fun, t_span, y0, method=method, t_eval=t_eval,
        rtol=rtol, atol=atol, max_step=max_step,
    )
    if sol.status != 0:
        raise StepFailure(f"integration stopped at t={sol.t[-1] if sol.t.size else t_span[0]}: {sol.message}")
    return sol

"""Static SVG figures for scenario outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import PlotError  # noqa: E402

PLOT_KINDS = ("timeseries", "portrait", "sweep")

_RC = {
    "svg.hashsalt": "optosync",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.figsize": (6.0, 3.8),
}


def _require(table: dict, names) -> None:
    missing = [n for n in names if n not in table]
    if missing:
        raise PlotError(f"table lacks column(s) {missing}; has {sorted(table)}")


def emit_plot(table: dict, kind: str, path, x: str = "t", y=None, pairs=None,
              xscale: float = 1.0, xlabel: str | None = None, ylabel: str | None = None,
              title: str | None = None) -> Path:
    """Render ``table`` (column name -> 1-D array) to an SVG file.

    ``timeseries`` and ``sweep`` draw ``y`` columns against ``x`` (x values
    divided by ``xscale``); ``portrait`` draws each (q, p) column pair in
    ``pairs`` as a parametric curve.  Output is byte-stable across runs.
    """
    if kind not in PLOT_KINDS:
        raise PlotError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    if not table or all(len(np.atleast_1d(v)) == 0 for v in table.values()):
        raise PlotError("cannot plot an empty table")
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            if kind == "portrait":
                pairs = pairs or [("q1", "p1"), ("q2", "p2")]
                _require(table, [c for pair in pairs for c in pair])
                for q, p in pairs:
                    (line,) = ax.plot(table[q], table[p], label=f"({q}, {p})")
                    line.set_gid(f"series-{q}-{p}")
                ax.set_aspect("equal", adjustable="datalim")
                ax.set_xlabel(xlabel or "q")
                ax.set_ylabel(ylabel or "p")
            else:
                y = [y] if isinstance(y, str) else (y or [c for c in table if c != x])
                _require(table, [x, *y])
                xs = np.asarray(table[x]) / xscale
                marker = "o" if kind == "sweep" else None
                for col in y:
                    (line,) = ax.plot(xs, table[col], marker=marker, markersize=3, label=col)
                    line.set_gid(f"series-{col}")
                ax.set_xlabel(xlabel or x)
                if ylabel:
                    ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.legend(loc="best", fontsize=8)
            fig.tight_layout()
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "optosync"})
        except OSError as exc:
            raise PlotError(f"cannot write {path}: {exc}") from exc
        finally:
            plt.close(fig)
    return path

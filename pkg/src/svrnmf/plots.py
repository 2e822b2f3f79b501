"""Convergence figures rendered to files next to the trace CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trace import ConvergenceTrace  # noqa: E402

# Gaps at or below zero cannot sit on a log axis; clip for display only.
_DISPLAY_FLOOR = 1e-16

_AXIS_LABELS = {
    "grad_count": "gradient evaluations",
    "wall_ms": "wall time [ms]",
    "epoch": "epoch",
}


def plot_gap_curves(traces_by_solver: dict[str, list[ConvergenceTrace]],
                    path, x_axis: str = "grad_count") -> Path:
    """Optimality gap against a progress axis, one curve family per solver.

    Individual seeds draw as faint lines; the per-solver median draws
    bold. The y axis is logarithmic.
    """
    if x_axis not in _AXIS_LABELS:
        raise ValueError(f"unknown x_axis {x_axis!r}")
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, (solver, traces) in enumerate(sorted(traces_by_solver.items())):
        color = colors[i % len(colors)]
        gap_rows = []
        for trace in traces:
            xs = [getattr(r, x_axis) for r in trace.records]
            gaps = np.maximum([r.optimality_gap for r in trace.records],
                              _DISPLAY_FLOOR)
            gap_rows.append(gaps)
            ax.plot(xs, gaps, color=color, alpha=0.25, linewidth=0.8)
        lengths = {len(g) for g in gap_rows}
        if len(lengths) == 1:
            xs = [getattr(r, x_axis) for r in traces[0].records]
            median = np.median(np.vstack(gap_rows), axis=0)
            ax.plot(xs, median, color=color, linewidth=1.8, label=solver)
        else:
            # ragged traces (early stopping): label the first seed instead
            xs = [getattr(r, x_axis) for r in traces[0].records]
            ax.plot(xs, gap_rows[0], color=color, linewidth=1.8, label=solver)
    ax.set_xlabel(_AXIS_LABELS[x_axis])
    ax.set_ylabel("optimality gap")
    ax.set_yscale("log")
    ax.grid(True, which="both", linestyle="--", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

"""Convergence traces, gradient-evaluation accounting, and the trace CSV format."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

TRACE_HEADER = ("epoch", "grad_count", "wall_ms", "cost", "optimality_gap")


def optimality_gap(cost: float, f_star: float) -> float:
    """Distance of the current cost from the reference optimum."""
    cost = float(cost)
    f_star = float(f_star)
    if not (math.isfinite(cost) and math.isfinite(f_star)):
        raise ValueError(f"cost and f_star must be finite, got {cost}, {f_star}")
    return cost - f_star


def gradient_cost(event: str, *, n_samples: int | None = None,
                  batch_size: int | None = None) -> int:
    """Gradient evaluations charged for one solver event.

    One sampled inner step costs its batch size (1 for single-sample
    rules); a snapshot's full-gradient precomputation and one full-data
    iteration each cost n_samples. This is the standard full-pass = N
    accounting used on gradient-count convergence axes.
    """
    if event == "inner_step":
        b = 1 if batch_size is None else int(batch_size)
        if b < 1:
            raise ValueError(f"batch_size must be >= 1, got {b}")
        return b
    if event in ("full_pass", "batch_iteration"):
        if n_samples is None or int(n_samples) < 1:
            raise ValueError(f"{event} requires n_samples >= 1, got {n_samples}")
        return int(n_samples)
    raise ValueError(f"unknown gradient event {event!r}")


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    grad_count: int
    wall_ms: float
    cost: float
    optimality_gap: float


class ConvergenceTrace:
    """Append-only per-epoch record of a solver run.

    Records carry (epoch, cumulative gradient count, cumulative wall
    milliseconds, cost, cost - f_star). Gradient counts must be strictly
    increasing and wall time non-decreasing; both are enforced at append
    time.
    """

    def __init__(self, f_star: float = 0.0):
        self.f_star = float(f_star)
        self.records: list[TraceRecord] = []

    def append(self, epoch: int, grad_count: int, wall_ms: float, cost: float) -> TraceRecord:
        grad_count = int(grad_count)
        wall_ms = float(wall_ms)
        cost = float(cost)
        if self.records:
            last = self.records[-1]
            if grad_count <= last.grad_count:
                raise ValueError(
                    f"grad_count must be strictly increasing: {grad_count} after {last.grad_count}"
                )
            if wall_ms < last.wall_ms:
                raise ValueError(
                    f"wall_ms must be non-decreasing: {wall_ms} after {last.wall_ms}"
                )
        rec = TraceRecord(int(epoch), grad_count, wall_ms, cost,
                          optimality_gap(cost, self.f_star))
        self.records.append(rec)
        return rec

    @property
    def final(self) -> TraceRecord:
        if not self.records:
            raise ValueError("trace is empty")
        return self.records[-1]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def write_csv(self, path) -> None:
        """Write the fixed-schema trace CSV.

        Floats use shortest round-trip formatting, so parsing the file
        reproduces the in-memory values exactly.
        """
        path = Path(path)
        lines = [",".join(TRACE_HEADER)]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.grad_count},{r.wall_ms!r},{r.cost!r},{r.optimality_gap!r}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_trace_csv(path) -> list[TraceRecord]:
    """Parse a trace CSV written by ConvergenceTrace.write_csv."""
    path = Path(path)
    lines = path.read_text(encoding="ascii").splitlines()
    if not lines or tuple(lines[0].split(",")) != TRACE_HEADER:
        raise ValueError(f"{path}: missing or malformed trace header")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(TRACE_HEADER):
            raise ValueError(f"{path}:{i}: expected {len(TRACE_HEADER)} fields")
        records.append(TraceRecord(int(parts[0]), int(parts[1]), float(parts[2]),
                                   float(parts[3]), float(parts[4])))
    return records

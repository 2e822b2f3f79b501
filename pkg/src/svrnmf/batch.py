"""Full-data multiplicative updates and the HALS reference solver.

The multiplicative rule alternates

    H <- H * (W.T V) / (W.T W H),   W <- W * (V H.T) / (W H H.T)

(entrywise product and division), which never increases the averaged
squared-error cost and preserves nonnegativity. HALS is used only to
produce the reference optimum f_star for optimality-gap reporting.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .model import (
    EPS_DIV,
    FactorPair,
    NumericalDivergenceError,
    frobenius_cost,
    init_factors,
    mul_div,
    require_nonneg_matrix,
)
from .trace import ConvergenceTrace, gradient_cost

log = logging.getLogger(__name__)

# Entry floor for HALS coordinate updates; keeps columns from collapsing
# to exact zero, which would freeze them out of later sweeps.
HALS_ENTRY_FLOOR = 1e-16


@dataclass(frozen=True)
class BatchConfig:
    """Iteration budget and stopping rule for full-data solvers."""

    max_iters: int
    rel_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (float(self.rel_tol) >= 0.0):
            raise ValueError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        object.__setattr__(self, "rel_tol", float(self.rel_tol))
        object.__setattr__(self, "seed", int(self.seed))


def mu_batch_step(V, W, H):
    """One full multiplicative sweep, H first then W.

    Entries of W or H that are exactly zero stay zero (the update is a
    product with a nonnegative ratio).
    """
    H = mul_div(H, W.T @ V, (W.T @ W) @ H)
    W = mul_div(W, V @ H.T, W @ (H @ H.T))
    return W, H


def _relative_drop(prev: float, cur: float) -> float:
    return abs(prev - cur) / max(abs(prev), 1e-300)


def mu_batch_solve(V, rank: int, config: BatchConfig, *, f_star: float = 0.0,
                   timing: bool = True, initial: FactorPair | None = None,
                   callback=None):
    """Iterate the multiplicative rule until max_iters or rel_tol.

    Returns the final factors and a per-iteration convergence trace whose
    cost column is monotonically non-increasing.
    """
    V = require_nonneg_matrix(V, "V")
    n_features, n_samples = V.shape
    if initial is None:
        W, H = init_factors(n_features, n_samples, rank, config.seed)
    else:
        W, H = initial.W.copy(), initial.H.copy()
    trace = ConvergenceTrace(f_star)
    grads = 0
    prev_cost = None
    t0 = time.perf_counter()
    for it in range(1, config.max_iters + 1):
        W, H = mu_batch_step(V, W, H)
        grads += gradient_cost("batch_iteration", n_samples=n_samples)
        wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        cost = frobenius_cost(V, W, H)
        if not np.isfinite(cost):
            raise NumericalDivergenceError(it, cost)
        trace.append(it, grads, wall_ms, cost)
        if callback is not None:
            callback(it, W, H)
        if prev_cost is not None and config.rel_tol > 0.0 \
                and _relative_drop(prev_cost, cost) < config.rel_tol:
            break
        prev_cost = cost
    return FactorPair(W, H), trace


def _hals_sweep(V, W, H):
    """One hierarchical alternating least-squares sweep, in place.

    Each row of H, then each column of W, gets its exact nonnegative
    coordinate least-squares value, clipped from below at the entry floor.
    Updates are sequential so later coordinates see earlier ones.
    """
    rank = W.shape[1]
    WtV = W.T @ V
    WtW = W.T @ W
    for k in range(rank):
        num = WtV[k] - WtW[k] @ H + WtW[k, k] * H[k]
        H[k] = np.maximum(num / max(WtW[k, k], EPS_DIV), HALS_ENTRY_FLOOR)
    VHt = V @ H.T
    HHt = H @ H.T
    for k in range(rank):
        num = VHt[:, k] - W @ HHt[:, k] + HHt[k, k] * W[:, k]
        W[:, k] = np.maximum(num / max(HHt[k, k], EPS_DIV), HALS_ENTRY_FLOOR)
    return W, H


def hals_solve_traced(V, rank: int, config: BatchConfig, *, f_star: float = 0.0,
                      timing: bool = True, initial: FactorPair | None = None):
    """HALS with a per-iteration trace; returns (factors, best_cost, trace)."""
    V = require_nonneg_matrix(V, "V")
    n_features, n_samples = V.shape
    if initial is None:
        W, H = init_factors(n_features, n_samples, rank, config.seed)
    else:
        W, H = initial.W.copy(), initial.H.copy()
    trace = ConvergenceTrace(f_star)
    grads = 0
    best = np.inf
    prev_cost = None
    t0 = time.perf_counter()
    for it in range(1, config.max_iters + 1):
        W, H = _hals_sweep(V, W, H)
        grads += gradient_cost("batch_iteration", n_samples=n_samples)
        wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        cost = frobenius_cost(V, W, H)
        if not np.isfinite(cost):
            raise NumericalDivergenceError(it, cost)
        best = min(best, cost)
        trace.append(it, grads, wall_ms, cost)
        if prev_cost is not None and config.rel_tol > 0.0 \
                and _relative_drop(prev_cost, cost) < config.rel_tol:
            break
        prev_cost = cost
    log.debug("hals finished after %d sweeps, best cost %.6e", len(trace), best)
    return FactorPair(W, H), float(best), trace


def hals_solve(V, rank: int, config: BatchConfig, *,
               initial: FactorPair | None = None):
    """HALS reference run; returns (factors, best cost found)."""
    factors, best, _ = hals_solve_traced(V, rank, config, timing=False,
                                         initial=initial)
    return factors, best

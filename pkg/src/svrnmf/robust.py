"""Outlier-aware variance-reduced factorization V ~= W H + R.

A nonnegative residual column r_n absorbs gross corruptions in sample n,
penalized by lam * ||r_n||_1. The coefficient and residual rules stay
multiplicative:

    h <- h * (W.T v) / (W.T W h + W.T r)
    r <- r * v / (W h + r + lam)

and the basis step is the variance-reduced update with (W h + r) and
(W_tilde h_tilde + r_tilde) in place of the clean reconstructions. With R
and its snapshot identically zero every rule reduces exactly to its plain
counterpart.
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
    OutlierModel,
    ShapeError,
    Snapshot,
    init_factors,
    make_snapshot,
    require_nonneg_matrix,
    robust_cost,
    seeded_rng,
)
from .stochastic import StochasticConfig, epoch_rng, stepsize_ratio, _check_alpha
from .trace import ConvergenceTrace, gradient_cost

log = logging.getLogger(__name__)

# Sub-stream tag for the residual matrix init; 0 is factor init, 1 epochs.
_RESIDUAL_STREAM = 2


@dataclass(frozen=True)
class RobustSnapshot:
    """Epoch anchor extended with the frozen residual matrix.

    full_grad_pos holds (W_tilde H_tilde + R_tilde) H_tilde.T / n, the
    positive full-gradient part of the outlier model; the negative part is
    unchanged and lives on the base snapshot.
    """

    base: Snapshot
    R_tilde: np.ndarray
    full_grad_pos: np.ndarray


def make_robust_snapshot(V, W, H, R) -> RobustSnapshot:
    base = make_snapshot(V, W, H)
    R = np.asarray(R, dtype=np.float64)
    if R.shape != np.asarray(V).shape:
        raise ShapeError(f"R has shape {R.shape} but V has shape {np.asarray(V).shape}")
    n = R.shape[1]
    full_grad_pos = base.full_grad_pos + (R @ base.H_tilde.T) / n
    return RobustSnapshot(base, R.copy(), full_grad_pos)


def robust_update_h(W, v, h, r) -> np.ndarray:
    """Coefficient update with the residual folded into the denominator.

    r = 0 reduces it exactly to the plain coefficient update.
    """
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if v.shape != (W.shape[0],) or r.shape != (W.shape[0],):
        raise ShapeError(
            f"v has shape {v.shape} and r {r.shape}, expected ({W.shape[0]},)"
        )
    if h.shape != (W.shape[1],):
        raise ShapeError(f"h has shape {h.shape}, expected ({W.shape[1]},)")
    return h * (W.T @ v) / np.maximum((W.T @ W) @ h + W.T @ r, EPS_DIV)


def robust_update_r(W, v, h, r, lam: float) -> np.ndarray:
    """Residual update r * v / (W h + r + lam).

    The constant lam in the denominator is the gradient of the l1 penalty
    over the nonnegative orthant; it shrinks residual entries toward zero.
    A zero data column zeroes the residual immediately.
    """
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    lam = float(lam)
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if v.shape != (W.shape[0],) or r.shape != (W.shape[0],):
        raise ShapeError(
            f"v has shape {v.shape} and r {r.shape}, expected ({W.shape[0]},)"
        )
    if h.shape != (W.shape[1],):
        raise ShapeError(f"h has shape {h.shape}, expected ({W.shape[1]},)")
    return r * v / np.maximum(W @ h + r + lam, EPS_DIV)


def rsvrmu_w_update(W, rsnap: RobustSnapshot, v, h, r, h_tilde, r_tilde,
                    alpha: float) -> np.ndarray:
    """Variance-reduced basis update for the outlier model.

    Same shape as the plain update with the sampled reconstructions
    replaced by W h + r (live) and W_tilde h_tilde + r_tilde (snapshot).
    Zero residuals everywhere reduce it bitwise to the plain step.
    """
    alpha = _check_alpha(alpha)
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    h_tilde = np.asarray(h_tilde, dtype=np.float64)
    r_tilde = np.asarray(r_tilde, dtype=np.float64)
    if v.shape != (W.shape[0],) or r.shape != (W.shape[0],) \
            or r_tilde.shape != (W.shape[0],):
        raise ShapeError(
            f"v/r/r_tilde must have shape ({W.shape[0]},), got "
            f"{v.shape}, {r.shape}, {r_tilde.shape}"
        )
    if h.shape != (W.shape[1],) or h_tilde.shape != (W.shape[1],):
        raise ShapeError(
            f"h/h_tilde must have shape ({W.shape[1]},), got {h.shape}, {h_tilde.shape}"
        )
    pos = np.outer(W @ h + r, h) + np.outer(v, h_tilde) + rsnap.full_grad_pos
    neg = np.outer(v, h) + np.outer(rsnap.base.W_tilde @ h_tilde + r_tilde, h_tilde) \
        + rsnap.base.full_grad_neg
    return W - (alpha * W / np.maximum(pos, EPS_DIV)) * (pos - neg)


def init_residuals(V: np.ndarray, seed: int) -> np.ndarray:
    """Strictly positive residual start at the data's mean scale.

    Multiplicative residual updates lock zeros, so R must start positive
    everywhere unless the data itself is zero.
    """
    rng = seeded_rng(seed, _RESIDUAL_STREAM)
    scale = float(np.mean(V))
    return (1.0 - rng.random(V.shape)) * scale


def rsvrmu_solve(V, rank: int, config: StochasticConfig, lam: float = 1.0, *,
                 f_star: float = 0.0, timing: bool = True,
                 initial: FactorPair | None = None,
                 initial_residuals: np.ndarray | None = None, callback=None):
    """Variance-reduced solve of the outlier model; traces the robust cost.

    Per inner step the sampled coefficient, then residual, then the basis
    are updated, in that order. The residual snapshot is frozen per epoch
    alongside the factors.
    """
    V = require_nonneg_matrix(V, "V")
    n_features, n_samples = V.shape
    if config.batch_size != 1:
        raise ValueError("rsvrmu_solve is a single-sample rule; batch_size must be 1")
    lam = float(lam)
    if not (lam > 0.0):
        raise ValueError(f"lam must be > 0 for robust solving, got {lam}")
    if initial is None:
        W, H = init_factors(n_features, n_samples, rank, config.seed)
    else:
        W, H = initial.W.copy(), initial.H.copy()
    if initial_residuals is None:
        R = init_residuals(V, config.seed)
    else:
        R = require_nonneg_matrix(initial_residuals, "initial_residuals").copy()
        if R.shape != V.shape:
            raise ShapeError(f"initial_residuals has shape {R.shape}, expected {V.shape}")
    m = config.resolved_inner_iters(n_samples)
    per_epoch = gradient_cost("full_pass", n_samples=n_samples) \
        + m * gradient_cost("inner_step", batch_size=1)
    trace = ConvergenceTrace(f_star)
    grads = 0
    t0 = time.perf_counter()
    for s in range(config.epochs):
        rsnap = make_robust_snapshot(V, W, H, R)
        # Same sample stream as the plain solvers, so equal seeds give
        # paired column sequences across variants.
        rng = epoch_rng(config, s)
        for t in range(m):
            alpha = stepsize_ratio(config, s * m + t)
            k = int(rng.integers(n_samples))
            v = V[:, k]
            H[:, k] = robust_update_h(W, v, H[:, k], R[:, k])
            R[:, k] = robust_update_r(W, v, H[:, k], R[:, k], lam)
            W = rsvrmu_w_update(W, rsnap, v, H[:, k], R[:, k],
                                rsnap.base.H_tilde[:, k], rsnap.R_tilde[:, k],
                                alpha)
        grads += per_epoch
        wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        cost = robust_cost(V, W, H, R, lam)
        if not np.isfinite(cost):
            raise NumericalDivergenceError(s + 1, cost)
        trace.append(s + 1, grads, wall_ms, cost)
        if callback is not None:
            callback(s + 1, W, H, R)
        log.debug("rsvrmu epoch %d/%d cost %.6e", s + 1, config.epochs, cost)
    return FactorPair(W, H), OutlierModel(R, lam), trace

"""Stochastic multiplicative updates, plain and variance-reduced.

The single-sample rule (SMU) applies the multiplicative update to one
uniformly sampled data column per step. Its basis update is an SGD step
with an entrywise adaptive stepsize

    W <- W - S * (W h h.T - v h.T),    S = alpha * W / (W h h.T),

where alpha in (0, 1] scales the step; alpha = 1 recovers the pure
multiplicative form.

SVRMU reduces the variance of that step with an epoch snapshot: the
sampled gradient is corrected by the same sample's gradient at the
snapshot plus the snapshot's full gradient. Grouping nonnegative terms
gives two entrywise-nonnegative parts (pos, neg) whose difference is the
corrected gradient estimate, and the update

    W <- W - (alpha * W / pos) * (pos - neg)

stays multiplicative, hence nonnegativity-preserving, for alpha <= 1.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .accel import AccelConfig, h_repeat_budget, repeat_h_update
from .model import (
    EPS_DIV,
    FactorPair,
    NumericalDivergenceError,
    ShapeError,
    Snapshot,
    frobenius_cost,
    init_factors,
    make_snapshot,
    require_nonneg_matrix,
    seeded_rng,
)
from .trace import ConvergenceTrace, gradient_cost

log = logging.getLogger(__name__)

# Sub-stream tag for per-epoch sample draws; stream 0 is factor init.
_EPOCH_STREAM = 1


@dataclass(frozen=True)
class StochasticConfig:
    """Schedule and sampling parameters shared by the sampled solvers.

    inner_iters left as None resolves to n_samples // batch_size at solve
    time, so one epoch touches n_samples entries in expectation. The
    default stepsize ratio is deliberately conservative: ratios near 1
    let the multiplicative noise of sampled steps compound into overflow
    on normalized data.
    """

    epochs: int
    inner_iters: int | None = None
    alpha0: float = 0.05
    decay: float = 1e-3
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.inner_iters is not None and int(self.inner_iters) < 1:
            raise ValueError(f"inner_iters must be >= 1, got {self.inner_iters}")
        if not (0.0 < float(self.alpha0) <= 1.0):
            raise ValueError(f"alpha0 must be in (0, 1], got {self.alpha0}")
        if not (float(self.decay) >= 0.0):
            raise ValueError(f"decay must be >= 0, got {self.decay}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "epochs", int(self.epochs))
        object.__setattr__(self, "inner_iters",
                           None if self.inner_iters is None else int(self.inner_iters))
        object.__setattr__(self, "alpha0", float(self.alpha0))
        object.__setattr__(self, "decay", float(self.decay))
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "seed", int(self.seed))

    def resolved_inner_iters(self, n_samples: int) -> int:
        if self.inner_iters is not None:
            return self.inner_iters
        return max(1, n_samples // self.batch_size)

    def check_batch_size(self, n_samples: int) -> None:
        if self.batch_size > n_samples:
            raise ValueError(
                f"batch_size {self.batch_size} exceeds n_samples {n_samples}"
            )


class GradientParts(NamedTuple):
    """Entrywise-nonnegative split of a gradient estimate: pos - neg."""

    pos: np.ndarray
    neg: np.ndarray


def epoch_rng(config: StochasticConfig, epoch_index: int) -> np.random.Generator:
    """Sample-draw generator for one epoch; epochs never share a stream."""
    return seeded_rng(config.seed, _EPOCH_STREAM, epoch_index)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    return alpha


def stepsize_ratio(config: StochasticConfig, inner_index: int) -> float:
    """Diminishing stepsize ratio alpha0 / (1 + decay * j).

    j is the global inner-iteration counter across epochs; decay = 0 gives
    a constant ratio.
    """
    if inner_index < 0:
        raise ValueError(f"inner_index must be >= 0, got {inner_index}")
    return config.alpha0 / (1.0 + config.decay * inner_index)


def smu_update_h(W, v, h) -> np.ndarray:
    """Multiplicative coefficient update h * (W.T v) / (W.T W h).

    For rank 1 this lands exactly on the nonnegative least-squares
    solution in one step. Zero entries of h stay zero.
    """
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (W.shape[0],):
        raise ShapeError(f"v has shape {v.shape}, expected ({W.shape[0]},)")
    if h.shape != (W.shape[1],):
        raise ShapeError(f"h has shape {h.shape}, expected ({W.shape[1]},)")
    return h * (W.T @ v) / np.maximum((W.T @ W) @ h, EPS_DIV)


def smu_update_w(W, v, h, alpha: float) -> np.ndarray:
    """Sampled basis update W - S * (W h h.T - v h.T), S = alpha W / (W h h.T).

    alpha = 1 reproduces the multiplicative form W * (v h.T) / (W h h.T)
    exactly (up to rounding); any alpha in (0, 1] keeps W nonnegative.
    """
    alpha = _check_alpha(alpha)
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (W.shape[0],):
        raise ShapeError(f"v has shape {v.shape}, expected ({W.shape[0]},)")
    if h.shape != (W.shape[1],):
        raise ShapeError(f"h has shape {h.shape}, expected ({W.shape[1]},)")
    denom = np.outer(W @ h, h)
    step = alpha * W / np.maximum(denom, EPS_DIV)
    return W - step * (denom - np.outer(v, h))


def vr_grad_parts(W, snapshot: Snapshot, v, h, h_tilde) -> GradientParts:
    """Nonnegative split of the variance-reduced gradient estimate at W.

    pos = W h h.T + v h_tilde.T + snapshot full positive part,
    neg = v h.T + W_tilde h_tilde h_tilde.T + snapshot full negative part.

    pos - neg is the sampled gradient at W minus the same sample's
    gradient at the snapshot plus the snapshot's full gradient; at the
    snapshot itself it collapses to the full gradient exactly.
    """
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    h_tilde = np.asarray(h_tilde, dtype=np.float64)
    if v.shape != (W.shape[0],):
        raise ShapeError(f"v has shape {v.shape}, expected ({W.shape[0]},)")
    if h.shape != (W.shape[1],) or h_tilde.shape != (W.shape[1],):
        raise ShapeError(
            f"h has shape {h.shape} and h_tilde {h_tilde.shape}, "
            f"expected ({W.shape[1]},)"
        )
    if snapshot.W_tilde.shape != W.shape:
        raise ShapeError(
            f"snapshot W_tilde has shape {snapshot.W_tilde.shape}, expected {W.shape}"
        )
    pos = np.outer(W @ h, h) + np.outer(v, h_tilde) + snapshot.full_grad_pos
    neg = np.outer(v, h) + np.outer(snapshot.W_tilde @ h_tilde, h_tilde) \
        + snapshot.full_grad_neg
    return GradientParts(pos, neg)


def svrmu_inner_step(W, snapshot: Snapshot, v, h, h_tilde, alpha: float) -> np.ndarray:
    """Variance-reduced basis update W - (alpha W / pos) * (pos - neg).

    Algebraically W * ((1 - alpha) + alpha * neg / pos), so the result is
    entrywise nonnegative for any alpha in (0, 1].
    """
    alpha = _check_alpha(alpha)
    pos, neg = vr_grad_parts(W, snapshot, v, h, h_tilde)
    W = np.asarray(W, dtype=np.float64)
    return W - (alpha * W / np.maximum(pos, EPS_DIV)) * (pos - neg)


def svrmu_minibatch_inner_step(W, snapshot: Snapshot, V, H, sample,
                               alpha: float) -> np.ndarray:
    """Mini-batch variant: per-sample terms averaged over the batch.

    The batch terms carry weight 1/b while the snapshot's full-gradient
    terms keep their 1/n weight. A batch of size 1 reproduces
    svrmu_inner_step bit for bit; a full batch with coefficients frozen at
    the snapshot reproduces the deterministic full-gradient step.
    """
    alpha = _check_alpha(alpha)
    W = np.asarray(W, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    sample = np.asarray(sample, dtype=np.intp)
    if sample.ndim != 1 or sample.size == 0:
        raise ValueError(f"sample set must be a nonempty 1-D index array, got shape {sample.shape}")
    n = V.shape[1]
    if (sample < 0).any() or (sample >= n).any():
        raise IndexError(f"sample indices must lie in [0, {n}), got {sample}")
    if np.unique(sample).size != sample.size:
        raise ValueError(f"sample indices must be distinct, got {sample}")
    b = sample.size
    Vc = V[:, sample]
    Hc = H[:, sample]
    Htc = snapshot.H_tilde[:, sample]
    pos = ((W @ Hc) @ Hc.T + Vc @ Htc.T) / b + snapshot.full_grad_pos
    neg = (Vc @ Hc.T + (snapshot.W_tilde @ Htc) @ Htc.T) / b + snapshot.full_grad_neg
    return W - (alpha * W / np.maximum(pos, EPS_DIV)) * (pos - neg)


def svrmu_epoch(V, factors: FactorPair, config: StochasticConfig,
                epoch_index: int, *, accel: AccelConfig | None = None,
                rng: np.random.Generator | None = None):
    """One snapshot-anchored epoch of inner sampled steps.

    Freezes the incoming factors as the epoch anchor, precomputes the full
    gradient components, then runs the configured number of inner
    iterations, each sampling columns uniformly, updating the live
    coefficients and then the basis. Returns the updated factors and the
    anchor snapshot; the next epoch re-anchors on the returned factors.
    """
    V = np.asarray(V, dtype=np.float64)
    n_features, n_samples = V.shape
    config.check_batch_size(n_samples)
    snapshot = make_snapshot(V, factors.W, factors.H)
    W = factors.W.copy()
    H = factors.H.copy()
    if rng is None:
        rng = epoch_rng(config, epoch_index)
    m = config.resolved_inner_iters(n_samples)
    b = config.batch_size
    budget = None
    if accel is not None:
        budget = h_repeat_budget(n_features, n_samples, factors.rank, accel.beta)
    for t in range(m):
        alpha = stepsize_ratio(config, epoch_index * m + t)
        if b == 1:
            k = int(rng.integers(n_samples))
            v = V[:, k]
            if accel is not None:
                H[:, k] = repeat_h_update(H[:, k], W.T @ v, W.T @ W,
                                          budget, accel.epsilon)
            else:
                H[:, k] = smu_update_h(W, v, H[:, k])
            W = svrmu_inner_step(W, snapshot, v, H[:, k],
                                 snapshot.H_tilde[:, k], alpha)
        else:
            sample = rng.choice(n_samples, size=b, replace=False)
            if accel is not None:
                WtW = W.T @ W
                for k in sample:
                    H[:, k] = repeat_h_update(H[:, k], W.T @ V[:, k], WtW,
                                              budget, accel.epsilon)
            else:
                Hc = H[:, sample]
                H[:, sample] = Hc * (W.T @ V[:, sample]) \
                    / np.maximum((W.T @ W) @ Hc, EPS_DIV)
            W = svrmu_minibatch_inner_step(W, snapshot, V, H, sample, alpha)
    if not (np.isfinite(W).all() and np.isfinite(H).all()):
        raise NumericalDivergenceError(epoch_index + 1, float("nan"))
    return FactorPair(W, H), snapshot


def svrmu_solve(V, rank: int, config: StochasticConfig, *,
                accel: AccelConfig | None = None, f_star: float = 0.0,
                timing: bool = True, initial: FactorPair | None = None,
                callback=None):
    """Run epochs of the variance-reduced solver and trace convergence.

    Each epoch is charged n_samples gradient evaluations for its snapshot
    plus batch_size per inner step. Identical seeds give bit-identical
    traces (modulo wall time, which can be disabled with timing=False).
    """
    V = require_nonneg_matrix(V, "V")
    n_features, n_samples = V.shape
    config.check_batch_size(n_samples)
    if initial is None:
        W, H = init_factors(n_features, n_samples, rank, config.seed)
        factors = FactorPair(W, H)
    else:
        factors = initial
    m = config.resolved_inner_iters(n_samples)
    per_epoch = gradient_cost("full_pass", n_samples=n_samples) \
        + m * gradient_cost("inner_step", batch_size=config.batch_size)
    trace = ConvergenceTrace(f_star)
    grads = 0
    t0 = time.perf_counter()
    for s in range(config.epochs):
        factors, _ = svrmu_epoch(V, factors, config, s, accel=accel)
        grads += per_epoch
        wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        cost = frobenius_cost(V, factors.W, factors.H)
        if not np.isfinite(cost):
            raise NumericalDivergenceError(s + 1, cost)
        trace.append(s + 1, grads, wall_ms, cost)
        if callback is not None:
            callback(s + 1, factors.W, factors.H)
        log.debug("svrmu epoch %d/%d cost %.6e", s + 1, config.epochs, cost)
    return factors, trace


def smu_solve(V, rank: int, config: StochasticConfig, *,
              accel: AccelConfig | None = None, f_star: float = 0.0,
              timing: bool = True, initial: FactorPair | None = None,
              callback=None):
    """Plain stochastic multiplicative updates, no snapshot correction.

    One uniformly sampled column per inner step; each step costs one
    gradient evaluation. Epochs exist only as trace boundaries.
    """
    V = require_nonneg_matrix(V, "V")
    n_features, n_samples = V.shape
    if config.batch_size != 1:
        raise ValueError("smu_solve is a single-sample rule; batch_size must be 1")
    if initial is None:
        W, H = init_factors(n_features, n_samples, rank, config.seed)
    else:
        W, H = initial.W.copy(), initial.H.copy()
    m = config.resolved_inner_iters(n_samples)
    budget = None
    if accel is not None:
        budget = h_repeat_budget(n_features, n_samples, rank, accel.beta)
    trace = ConvergenceTrace(f_star)
    grads = 0
    t0 = time.perf_counter()
    for s in range(config.epochs):
        rng = epoch_rng(config, s)
        for t in range(m):
            alpha = stepsize_ratio(config, s * m + t)
            k = int(rng.integers(n_samples))
            v = V[:, k]
            if accel is not None:
                H[:, k] = repeat_h_update(H[:, k], W.T @ v, W.T @ W,
                                          budget, accel.epsilon)
            else:
                H[:, k] = smu_update_h(W, v, H[:, k])
            W = smu_update_w(W, v, H[:, k], alpha)
        grads += m * gradient_cost("inner_step", batch_size=1)
        wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        cost = frobenius_cost(V, W, H)
        if not np.isfinite(cost):
            raise NumericalDivergenceError(s + 1, cost)
        trace.append(s + 1, grads, wall_ms, cost)
        if callback is not None:
            callback(s + 1, W, H)
        log.debug("smu epoch %d/%d cost %.6e", s + 1, config.epochs, cost)
    return FactorPair(W, H), trace

"""Dense nonnegative matrix types, factorization costs, and shared kernels.

Everything downstream (batch, stochastic, robust solvers) works on plain
float64 numpy arrays validated through this module. Matrices follow the
data-as-columns convention: V is (n_features, n_samples), W is
(n_features, rank), H is (rank, n_samples).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Floor applied to every multiplicative-rule denominator. Small enough to
# leave well-conditioned updates untouched, large enough to never produce
# NaN/Inf from a vanishing denominator.
EPS_DIV = 1e-12


class ShapeError(ValueError):
    """Operand dimensions are incompatible; the message names the axes."""


class NumericalDivergenceError(RuntimeError):
    """A solver produced a non-finite cost."""

    def __init__(self, epoch: int, cost: float):
        super().__init__(f"non-finite cost {cost!r} at epoch {epoch}")
        self.epoch = epoch
        self.cost = cost


def seeded_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream) so sub-streams never collide."""
    return np.random.default_rng([int(seed), *map(int, stream)])


def require_nonneg_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate a dense 2-D array: finite, entrywise >= 0, nonempty."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {a.ndim}-D shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must have positive dimensions, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    if (a < 0.0).any():
        raise ValueError(f"{name} contains negative entries")
    return a


def require_nonneg_vector(v, name: str = "vector") -> np.ndarray:
    """Validate a dense 1-D array: finite, entrywise >= 0."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got {v.ndim}-D shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite entries")
    if (v < 0.0).any():
        raise ValueError(f"{name} contains negative entries")
    return v


def _check_factor_shapes(V: np.ndarray, W: np.ndarray, H: np.ndarray) -> None:
    if W.shape[1] != H.shape[0]:
        raise ShapeError(
            f"W has {W.shape[1]} columns but H has {H.shape[0]} rows"
        )
    if V.shape[0] != W.shape[0]:
        raise ShapeError(
            f"V has {V.shape[0]} rows but W has {W.shape[0]} rows"
        )
    if V.shape[1] != H.shape[1]:
        raise ShapeError(
            f"V has {V.shape[1]} columns but H has {H.shape[1]} columns"
        )


@dataclass(frozen=True)
class FactorPair:
    """A factorization iterate (W, H), V ~= W @ H.

    W is (n_features, rank), H is (rank, n_samples), both entrywise
    nonnegative, with rank <= min(n_features, n_samples).
    """

    W: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        W = require_nonneg_matrix(self.W, "W")
        H = require_nonneg_matrix(self.H, "H")
        if W.shape[1] != H.shape[0]:
            raise ShapeError(
                f"W has {W.shape[1]} columns but H has {H.shape[0]} rows"
            )
        rank = W.shape[1]
        if rank > min(W.shape[0], H.shape[1]):
            raise ShapeError(
                f"rank {rank} exceeds min(n_features={W.shape[0]}, "
                f"n_samples={H.shape[1]})"
            )
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "H", H)

    @property
    def rank(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class Snapshot:
    """Epoch anchor: frozen factors plus the two full-gradient components.

    full_grad_pos holds W_tilde @ H_tilde @ H_tilde.T / n_samples and
    full_grad_neg holds V @ H_tilde.T / n_samples, so that
    full_grad_pos - full_grad_neg is the full gradient of the averaged
    cost at the anchor.
    """

    W_tilde: np.ndarray
    H_tilde: np.ndarray
    full_grad_pos: np.ndarray
    full_grad_neg: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.H_tilde.shape[1]


def make_snapshot(V: np.ndarray, W: np.ndarray, H: np.ndarray) -> Snapshot:
    """Freeze (W, H) and precompute the shared full-gradient components."""
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    _check_factor_shapes(V, W, H)
    n = V.shape[1]
    full_grad_pos = W @ (H @ H.T) / n
    full_grad_neg = V @ H.T / n
    return Snapshot(W.copy(), H.copy(), full_grad_pos, full_grad_neg)


@dataclass(frozen=True)
class OutlierModel:
    """Nonnegative residual matrix R with its l1 penalty weight."""

    R: np.ndarray
    lam: float

    def __post_init__(self):
        R = require_nonneg_matrix(self.R, "R")
        lam = float(self.lam)
        if lam < 0.0 or not np.isfinite(lam):
            raise ValueError(f"lam must be a finite nonnegative real, got {lam}")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "lam", lam)


def mul_div(a, b, c) -> np.ndarray:
    """Entrywise a * b / c with the denominator floored at EPS_DIV.

    The guard keeps a zero denominator from producing NaN: when a * b is 0
    there the result is exactly 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if not (a.shape == b.shape == c.shape):
        raise ShapeError(
            f"operands must share a shape, got {a.shape}, {b.shape}, {c.shape}"
        )
    return a * b / np.maximum(c, EPS_DIV)


def frobenius_cost(V, W, H) -> float:
    """Per-sample-averaged squared-error cost of V ~= W @ H.

    Returns (1/n_samples) * sum_n 0.5 * ||v_n - W h_n||^2, i.e. the
    squared Frobenius residual halved and divided by the column count.
    The averaging makes full-data and per-sample solver traces directly
    comparable.
    """
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    _check_factor_shapes(V, W, H)
    resid = V - W @ H
    return 0.5 * float(np.sum(resid * resid)) / V.shape[1]


def robust_cost(V, W, H, R, lam: float) -> float:
    """Averaged cost of the outlier model V ~= W @ H + R.

    Adds the entrywise l1 penalty lam * ||r_n||_1 to each per-sample
    squared error before averaging. With R identically zero this equals
    frobenius_cost for any lam.
    """
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    _check_factor_shapes(V, W, H)
    if R.shape != V.shape:
        raise ShapeError(f"R has shape {R.shape} but V has shape {V.shape}")
    resid = V - W @ H - R
    n = V.shape[1]
    return (0.5 * float(np.sum(resid * resid)) + float(lam) * float(np.sum(np.abs(R)))) / n


def init_factors(n_features: int, n_samples: int, rank: int, seed: int):
    """Strictly positive random starting factors.

    Entries are i.i.d. uniform on (0, 1] scaled by 1/sqrt(rank). Strict
    positivity matters: multiplicative rules lock exact zeros forever.
    """
    if rank < 1 or rank > min(n_features, n_samples):
        raise ShapeError(
            f"rank {rank} must be in [1, min(n_features={n_features}, "
            f"n_samples={n_samples})]"
        )
    rng = seeded_rng(seed, 0)
    scale = 1.0 / np.sqrt(rank)
    W = (1.0 - rng.random((n_features, rank))) * scale
    H = (1.0 - rng.random((rank, n_samples))) * scale
    return W, H

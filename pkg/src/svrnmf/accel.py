"""Acceleration of the sampled coefficient update.

A coefficient vector update is far cheaper than a basis update (roughly
3*F*K + 2*K multiplications against 3*F*K + 2*F*N), so it pays to repeat
it several times per basis update. The repeat count is capped by the
complexity ratio of the two updates and cut short dynamically once the
iterate stops moving relative to its total displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import EPS_DIV, ShapeError


@dataclass(frozen=True)
class AccelConfig:
    """Repeat budget fraction and dynamic-stop ratio."""

    beta: float = 0.5
    epsilon: float = 1e-3

    def __post_init__(self):
        if not (0.0 <= float(self.beta) <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not (float(self.epsilon) > 0.0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "epsilon", float(self.epsilon))


def h_repeat_budget(n_features: int, n_samples: int, rank: int, beta: float) -> int:
    """Maximum coefficient repeats per basis update.

    floor(beta * (3FK + 2FN) / (3FK + 2K)), never below 1. beta scales the
    fraction of the basis-update cost spent on coefficient repeats.
    """
    if n_features < 1 or n_samples < 1 or rank < 1:
        raise ValueError(
            f"dimensions must be positive, got ({n_features}, {n_samples}, {rank})"
        )
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    w_update_work = 3 * n_features * rank + 2 * n_features * n_samples
    h_update_work = 3 * n_features * rank + 2 * rank
    return max(math.floor(beta * w_update_work / h_update_work), 1)


def repeat_h_update(h, Wt_v, WtW, max_repeats: int, epsilon: float) -> np.ndarray:
    """Apply the multiplicative coefficient update up to max_repeats times.

    Wt_v and WtW are the products W.T @ v and W.T @ W computed once by the
    caller; reusing them across repeats is the whole saving. The loop
    breaks once ||h_l - h_{l-1}|| < epsilon * ||h_l - h_0|| (strict), and
    returns immediately when an iterate exactly reproduces the previous
    one. epsilon = 0 disables the dynamic stop so exactly max_repeats
    updates run.
    """
    h0 = np.asarray(h, dtype=np.float64)
    Wt_v = np.asarray(Wt_v, dtype=np.float64)
    WtW = np.asarray(WtW, dtype=np.float64)
    rank = h0.shape[0]
    if Wt_v.shape != (rank,):
        raise ShapeError(f"Wt_v has shape {Wt_v.shape}, expected ({rank},)")
    if WtW.shape != (rank, rank):
        raise ShapeError(f"WtW has shape {WtW.shape}, expected ({rank}, {rank})")
    if int(max_repeats) < 1:
        raise ValueError(f"max_repeats must be >= 1, got {max_repeats}")
    if not (float(epsilon) >= 0.0):
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    h_prev = h0
    for _ in range(int(max_repeats)):
        h_next = h_prev * Wt_v / np.maximum(WtW @ h_prev, EPS_DIV)
        if np.array_equal(h_next, h_prev):
            return h_next
        if np.linalg.norm(h_next - h_prev) < epsilon * np.linalg.norm(h_next - h0):
            return h_next
        h_prev = h_next
    return h_prev

"""Outlier-aware updates and their reductions to the plain rules."""

import numpy as np
import pytest

from svrnmf.model import EPS_DIV, FactorPair, init_factors, make_snapshot
from svrnmf.robust import (
    make_robust_snapshot,
    robust_update_h,
    robust_update_r,
    rsvrmu_solve,
    rsvrmu_w_update,
)
from svrnmf.stochastic import StochasticConfig, smu_update_h, svrmu_inner_step


def random_state(seed, F=5, N=7, K=2):
    rng = np.random.default_rng(seed)
    V = rng.random((F, N)) + 0.05
    W = rng.random((F, K)) + 0.05
    H = rng.random((K, N)) + 0.05
    R = rng.random((F, N)) * 0.3
    W_tilde = rng.random((F, K)) + 0.05
    H_tilde = rng.random((K, N)) + 0.05
    R_tilde = rng.random((F, N)) * 0.3
    return V, W, H, R, W_tilde, H_tilde, R_tilde


class TestRobustUpdateH:
    def test_zero_residual_reduction_is_bitwise(self):
        rng = np.random.default_rng(3)
        W = rng.random((6, 3)) + 0.1
        v = rng.random(6)
        h = rng.random(3) + 0.1
        got = robust_update_h(W, v, h, np.zeros(6))
        np.testing.assert_array_equal(got, smu_update_h(W, v, h))

    def test_fixed_point_with_residual(self):
        rng = np.random.default_rng(5)
        W = rng.random((6, 3)) + 0.1
        h = rng.random(3) + 0.1
        r = rng.random(6) * 0.2
        v = W @ h + r
        np.testing.assert_allclose(robust_update_h(W, v, h, r), h, rtol=1e-12)

    def test_matches_transcription(self):
        rng = np.random.default_rng(7)
        W = rng.random((4, 2)) + 0.05
        v = rng.random(4)
        h = rng.random(2) + 0.05
        r = rng.random(4) * 0.5
        oracle = h * (W.T @ v) / np.maximum(W.T @ (W @ h) + W.T @ r, EPS_DIV)
        np.testing.assert_allclose(robust_update_h(W, v, h, r), oracle,
                                   atol=1e-14)


class TestRobustUpdateR:
    def test_zero_data_zeroes_residual(self):
        rng = np.random.default_rng(9)
        W = rng.random((5, 2))
        h = rng.random(2)
        r = rng.random(5) + 0.1
        out = robust_update_r(W, np.zeros(5), h, r, lam=0.5)
        np.testing.assert_array_equal(out, np.zeros(5))

    def test_fixed_point_lambda_zero(self):
        rng = np.random.default_rng(11)
        W = rng.random((5, 2)) + 0.1
        h = rng.random(2) + 0.1
        r = rng.random(5) + 0.1
        v = W @ h + r
        np.testing.assert_allclose(robust_update_r(W, v, h, r, 0.0), r,
                                   rtol=1e-12)

    def test_scalar_shrunk_fixed_point(self):
        W = np.zeros((1, 1))
        h = np.array([0.7])
        v = np.array([2.0])
        r = np.array([1.0])
        out = robust_update_r(W, v, h, r, lam=1.0)
        assert out[0] == 1.0  # 1 * 2 / (0 + 1 + 1)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError, match="lam"):
            robust_update_r(np.ones((2, 1)), np.ones(2), np.ones(1),
                            np.ones(2), -0.5)


class TestRsvrmuWUpdate:
    def test_zero_residual_reduction_is_bitwise(self):
        V, W, H, _, W_tilde, H_tilde, _ = random_state(13)
        zeros_col = np.zeros(V.shape[0])
        zeros_mat = np.zeros_like(V)
        rsnap = make_robust_snapshot(V, W_tilde, H_tilde, zeros_mat)
        snap = make_snapshot(V, W_tilde, H_tilde)
        k = 3
        robust = rsvrmu_w_update(W, rsnap, V[:, k], H[:, k], zeros_col,
                                 H_tilde[:, k], zeros_col, 0.5)
        plain = svrmu_inner_step(W, snap, V[:, k], H[:, k], H_tilde[:, k], 0.5)
        np.testing.assert_array_equal(robust, plain)

    def test_snapshot_coincidence_collapses_to_full_gradient(self):
        V, W, H, R, _, _, _ = random_state(17)
        rsnap = make_robust_snapshot(V, W, H, R)
        k = 2
        pos = np.outer(W @ H[:, k] + R[:, k], H[:, k]) \
            + np.outer(V[:, k], H[:, k]) + rsnap.full_grad_pos
        full = rsnap.full_grad_pos - rsnap.base.full_grad_neg
        got = rsvrmu_w_update(W, rsnap, V[:, k], H[:, k], R[:, k],
                              H[:, k], R[:, k], 0.3)
        expected = W - (0.3 * W / np.maximum(pos, EPS_DIV)) * full
        assert np.max(np.abs(got - expected)) <= 1e-12

    def test_matches_transcription_oracle(self):
        V, W, H, R, W_tilde, H_tilde, R_tilde = random_state(19)
        rsnap = make_robust_snapshot(V, W_tilde, H_tilde, R_tilde)
        k = 4
        alpha = 0.45
        N = V.shape[1]
        v, h, r = V[:, k], H[:, k], R[:, k]
        ht, rt = H_tilde[:, k], R_tilde[:, k]
        pos = np.outer(W @ h + r, h) + np.outer(v, ht) \
            + (W_tilde @ H_tilde + R_tilde) @ H_tilde.T / N
        neg = np.outer(v, h) + np.outer(W_tilde @ ht + rt, ht) \
            + V @ H_tilde.T / N
        oracle = W - (alpha * W / np.maximum(pos, EPS_DIV)) * (pos - neg)
        got = rsvrmu_w_update(W, rsnap, v, h, r, ht, rt, alpha)
        assert np.max(np.abs(got - oracle)) <= 1e-12

    def test_nonnegative_output(self):
        rng = np.random.default_rng(23)
        for seed in range(20):
            V, W, H, R, W_tilde, H_tilde, R_tilde = random_state(seed + 50)
            W[rng.random(W.shape) < 0.15] = 0.0
            rsnap = make_robust_snapshot(V, W_tilde, H_tilde, R_tilde)
            alpha = float(rng.uniform(1e-6, 1.0))
            out = rsvrmu_w_update(W, rsnap, V[:, 0], H[:, 0], R[:, 0],
                                  H_tilde[:, 0], R_tilde[:, 0], alpha)
            assert out.min() >= 0


class TestRobustSnapshot:
    def test_parts_recomputable(self):
        V, W, H, R, *_ = random_state(29)
        rsnap = make_robust_snapshot(V, W, H, R)
        N = V.shape[1]
        np.testing.assert_allclose(rsnap.full_grad_pos,
                                   (W @ H + R) @ H.T / N, rtol=1e-12)
        assert rsnap.full_grad_pos.min() >= 0
        np.testing.assert_array_equal(rsnap.R_tilde, R)


class TestRsvrmuSolve:
    def test_zero_column_drives_h_and_r_to_zero(self):
        rng = np.random.default_rng(31)
        V = rng.random((6, 8)) + 0.05
        V[:, 2] = 0.0
        cfg = StochasticConfig(epochs=6, inner_iters=40, seed=4)
        factors, outliers, _ = rsvrmu_solve(V, 2, cfg, lam=0.2, timing=False)
        assert np.max(outliers.R[:, 2]) < 1e-8
        assert np.max(factors.H[:, 2]) < 1e-6

    def test_large_penalty_kills_residual(self):
        rng = np.random.default_rng(37)
        W = rng.random((8, 2)) + 0.1
        H = rng.random((2, 12)) + 0.1
        V = W @ H / (W @ H).max()
        cfg = StochasticConfig(epochs=15, seed=6)
        _, big, _ = rsvrmu_solve(V, 2, cfg, lam=1e6, timing=False)
        _, small, _ = rsvrmu_solve(V, 2, cfg, lam=0.05, timing=False)
        assert big.R.mean() < 1e-12
        assert big.R.mean() < small.R.mean()

    def test_clean_data_learns_smaller_residual_than_corrupted(self):
        from svrnmf.dataio import OutlierSpec, SyntheticSpec, gen_synthetic, inject_outliers
        V, _, _ = gen_synthetic(SyntheticSpec(20, 40, 3, seed=41))
        V_corrupt, _ = inject_outliers(V, OutlierSpec(0.4, 0.5, 1.0, seed=42))
        cfg = StochasticConfig(epochs=10, seed=7)
        _, clean_out, _ = rsvrmu_solve(V, 3, cfg, lam=0.1, timing=False)
        _, corrupt_out, _ = rsvrmu_solve(V_corrupt, 3, cfg, lam=0.1,
                                         timing=False)
        assert clean_out.R.mean() < corrupt_out.R.mean()

    def test_iterates_nonnegative_and_costs_finite(self):
        rng = np.random.default_rng(43)
        V = rng.random((10, 15))
        mins = []
        cfg = StochasticConfig(epochs=5, seed=8)
        _, _, trace = rsvrmu_solve(
            V, 3, cfg, lam=0.5, timing=False,
            callback=lambda e, W, H, R: mins.append(min(W.min(), H.min(), R.min())))
        assert len(mins) == 5 and min(mins) >= 0
        for r in trace:
            assert np.isfinite(r.cost) and r.cost >= 0

    def test_requires_positive_lambda_and_single_sample(self):
        V = np.ones((4, 5))
        with pytest.raises(ValueError, match="lam"):
            rsvrmu_solve(V, 2, StochasticConfig(epochs=1, seed=0), lam=0.0)
        with pytest.raises(ValueError, match="single-sample"):
            rsvrmu_solve(V, 2, StochasticConfig(epochs=1, batch_size=2, seed=0),
                         lam=1.0)

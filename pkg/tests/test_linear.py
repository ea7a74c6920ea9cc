"""iALS and EASE closed forms, debiased variants, and the theorem checks."""

import numpy as np
import pytest

from recloss import (
    EASEConfig,
    EASEScorer,
    IALSConfig,
    check_theorem1,
    check_theorem2,
    ease_debiased_fit,
    ease_fit,
    ials_fit,
    ials_objective,
)
from recloss.sampling import substream
from conftest import build_dataset


def random_binary(rng, shape, p=0.35):
    return (rng.random(shape) < p).astype(float)


class TestIALSConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            IALSConfig(d=0, alpha0=0.1, lam=1.0)
        with pytest.raises(ValueError):
            IALSConfig(d=2, alpha0=-0.1, lam=1.0)
        with pytest.raises(ValueError):
            IALSConfig(d=2, alpha0=0.1, lam=0.0)
        with pytest.raises(ValueError):
            IALSConfig(d=2, alpha0=0.1, lam=1.0, c_u=0.0)
        with pytest.raises(ValueError):
            IALSConfig(d=2, alpha0=0.1, lam=1.0, num_sweeps=0)


class TestIALSFit:
    def test_scalar_oracle(self):
        # 1 user, 1 item, d=1, alpha0=0, lam=1, nu=0: each half-sweep is the
        # 1-d ridge solve w = h / (h^2 + 1); replay the init stream to check.
        X = np.ones((1, 1))
        cfg = IALSConfig(d=1, alpha0=0.0, lam=1.0, nu=0.0, num_sweeps=1, seed=3)
        state = ials_fit(X, cfg)
        rng = substream(3, "init")
        w0 = rng.normal(0.0, cfg.init_scale, size=(1, 1))[0, 0]
        h0 = rng.normal(0.0, cfg.init_scale, size=(1, 1))[0, 0]
        w1 = h0 / (h0**2 + 1.0)
        h1 = w1 / (w1**2 + 1.0)
        assert state.W[0, 0] == pytest.approx(w1, rel=1e-12)
        assert state.H[0, 0] == pytest.approx(h1, rel=1e-12)
        del w0

    def test_user_halfsweep_matches_dense_solve(self, rng):
        X = random_binary(rng, (4, 6))
        X[0, :3] = 1.0  # user 0 is guaranteed observations
        cfg = IALSConfig(d=3, alpha0=0.2, lam=0.05, num_sweeps=1, seed=1)
        state = ials_fit(X, cfg)
        # reconstruct the H matrix the first user update saw
        stream = substream(1, "init")
        stream.normal(0.0, cfg.init_scale / np.sqrt(3), size=(4, 3))
        H0 = stream.normal(0.0, cfg.init_scale / np.sqrt(3), size=(6, 3))
        items = np.flatnonzero(X[0])
        lam_u = cfg.lam * (len(items) + cfg.alpha0 * 6) ** cfg.nu
        A = H0[items].T @ H0[items] + cfg.alpha0 * (H0.T @ H0) + lam_u * np.eye(3)
        expected = np.linalg.solve(A, H0[items].sum(axis=0))
        np.testing.assert_allclose(state.W[0], expected, rtol=1e-10)

    @pytest.mark.parametrize("debiased", [False, True])
    def test_objective_non_increasing(self, debiased, rng):
        X = random_binary(rng, (8, 10))
        cfg = IALSConfig(d=4, alpha0=0.1, lam=0.1, c_u=1.5, num_sweeps=10, seed=2)
        trace = ials_fit(X, cfg, debiased=debiased).objective_trace
        assert len(trace) == 11
        for a, b in zip(trace, trace[1:]):
            assert b <= a + 1e-9

    def test_unregularized_limit_fits_ones(self):
        X = np.ones((3, 4))
        cfg = IALSConfig(d=2, alpha0=0.0, lam=1e-8, nu=0.0, num_sweeps=50, seed=0)
        state = ials_fit(X, cfg)
        np.testing.assert_allclose(state.W @ state.H.T, np.ones((3, 4)), atol=1e-3)

    def test_dataset_and_matrix_sources_agree(self, rng):
        ds = build_dataset([[0, 2], [1], [0, 1, 3]], [[], [], []], 4)
        cfg = IALSConfig(d=2, alpha0=0.3, lam=0.2, num_sweeps=3, seed=5)
        from_ds = ials_fit(ds, cfg)
        from_mat = ials_fit(ds.train_matrix(), cfg)
        np.testing.assert_allclose(from_ds.W, from_mat.W, atol=1e-14)
        np.testing.assert_allclose(from_ds.H, from_mat.H, atol=1e-14)

    def test_debiased_alpha0_bound(self):
        cfg = IALSConfig(d=2, alpha0=1.5, lam=0.1)
        with pytest.raises(ValueError, match="alpha0 < 1"):
            ials_fit(np.ones((2, 2)), cfg, debiased=True)

    def test_score_interfaces_agree(self, rng):
        X = random_binary(rng, (5, 7))
        state = ials_fit(X, IALSConfig(d=3, alpha0=0.1, lam=0.1, num_sweeps=2))
        block = state.score_block(np.arange(5))
        for u in range(5):
            np.testing.assert_allclose(state.score_all(u), block[u], atol=1e-14)

    def test_objective_value_is_finite(self, rng):
        X = random_binary(rng, (6, 6))
        cfg = IALSConfig(d=2, alpha0=0.2, lam=0.3)
        state = ials_fit(X, cfg)
        assert np.isfinite(ials_objective(state.W, state.H, X, cfg))


def lagrangian_column_oracle(X, lam):
    """Per-column constrained ridge: eliminate the diagonal unknown."""
    n = X.shape[1]
    W = np.zeros((n, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        Xo = X[:, others]
        w = np.linalg.solve(Xo.T @ Xo + lam * np.eye(n - 1), Xo.T @ X[:, i])
        W[others, i] = w
    return W


class TestEASE:
    def test_identity_gives_zero(self):
        sol = ease_fit(np.eye(3), lam=0.5)
        assert np.all(sol.W == 0.0)
        np.testing.assert_allclose(sol.P, (2.0 / 3.0) * np.eye(3), atol=1e-15)

    def test_matches_per_column_oracle(self, rng):
        for _ in range(5):
            X = random_binary(rng, (6, 5))
            sol = ease_fit(X, lam=0.7)
            oracle = lagrangian_column_oracle(X, 0.7)
            assert np.max(np.abs(sol.W - oracle)) < 1e-8

    def test_huge_lambda_kills_weights(self, rng):
        X = random_binary(rng, (6, 5))
        assert np.max(np.abs(ease_fit(X, lam=1e6).W)) < 1e-3

    def test_diag_exactly_zero(self, rng):
        X = random_binary(rng, (7, 6))
        assert np.all(np.diag(ease_fit(X, lam=0.2).W) == 0.0)

    def test_stationarity_residual(self, rng):
        # (X'X + lam I) W - X'X must vanish off the diagonal
        X = random_binary(rng, (6, 5))
        lam = 0.4
        W = ease_fit(X, lam).W
        G = X.T @ X
        residual = (G + lam * np.eye(5)) @ W - G
        off = residual[~np.eye(5, dtype=bool)]
        assert np.max(np.abs(off)) < 1e-8

    def test_lambda_validation(self):
        with pytest.raises(ValueError):
            ease_fit(np.eye(2), lam=0.0)


class TestEASEDebiased:
    def test_alpha_zero_equals_plain(self, rng):
        X = random_binary(rng, (6, 5))
        plain = ease_fit(X, lam=0.3).W
        deb = ease_debiased_fit(X, lam=0.3, alpha=0.0).W
        assert np.max(np.abs(plain - deb)) < 1e-12

    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_identity_gives_zero(self, alpha):
        assert np.all(ease_debiased_fit(np.eye(4), lam=0.5, alpha=alpha).W == 0.0)

    def test_scale_identity(self, rng):
        X = random_binary(rng, (6, 5))
        alpha, lam = 0.3, 0.6
        deb = ease_debiased_fit(X, lam, alpha).W
        rescaled = ease_fit(X, lam / (1 - alpha)).W / (1 - alpha)
        denom = max(np.max(np.abs(rescaled)), 1e-30)
        assert np.max(np.abs(deb - rescaled)) / denom < 1e-10

    def test_alpha_range_enforced(self):
        with pytest.raises(ValueError, match="c_u < 2"):
            ease_debiased_fit(np.eye(2), lam=0.1, alpha=1.0)
        with pytest.raises(ValueError):
            EASEConfig(lam=0.1, alpha=-0.2)


class TestTheorem1:
    def test_reference_setting(self, rng):
        X = random_binary(rng, (8, 10))
        dev = check_theorem1(X, d=4, alpha0=0.1, c_u=2.0, lam=0.01)
        assert dev <= 1e-8

    def test_degenerate_parameters(self, rng):
        X = random_binary(rng, (6, 7))
        dev = check_theorem1(X, d=3, alpha0=1e-8, c_u=1.0, lam=0.05)
        assert dev <= 1e-8

    def test_multiple_seeds(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = random_binary(rng, (8, 10))
            dev = check_theorem1(X, d=4, alpha0=0.5, c_u=1.5, lam=0.01, seed=seed)
            assert dev <= 1e-8

    def test_custom_lambda_vectors(self, rng):
        X = random_binary(rng, (5, 6))
        lam_u = rng.uniform(0.1, 0.5, size=5)
        lam_i = rng.uniform(0.1, 0.5, size=6)
        dev = check_theorem1(
            X, d=3, alpha0=0.2, c_u=1.3,
            lambda_users=lam_u, lambda_items=lam_i,
        )
        assert dev <= 1e-8

    def test_premises_enforced(self):
        with pytest.raises(ValueError, match="alpha0"):
            check_theorem1(np.eye(3), d=2, alpha0=0.0, c_u=1.5)
        with pytest.raises(ValueError, match="c_u"):
            check_theorem1(np.eye(3), d=2, alpha0=0.2, c_u=0.0)


class TestTheorem2:
    def test_reference_setting(self, rng):
        X = random_binary(rng, (6, 8))
        scale_dev, oracle_dev = check_theorem2(X, lam=0.5, alpha=0.4)
        assert scale_dev < 1e-10
        assert oracle_dev < 1e-4

    def test_alpha_zero(self, rng):
        X = random_binary(rng, (6, 5))
        scale_dev, oracle_dev = check_theorem2(X, lam=0.5, alpha=0.0)
        assert scale_dev < 1e-12
        assert oracle_dev < 1e-4

    def test_oracle_size_guard(self, rng):
        X = random_binary(rng, (6, 9))
        with pytest.raises(ValueError, match="8 items"):
            check_theorem2(X, lam=0.5, alpha=0.3)
        scale_dev, oracle_dev = check_theorem2(X, lam=0.5, alpha=0.3, run_oracle=False)
        assert scale_dev < 1e-10
        assert oracle_dev == 0.0


class TestEASEScorer:
    def test_scores_are_row_sums(self, rng):
        ds = build_dataset([[0, 2], [1]], [[1], [0]], 3)
        W = rng.normal(size=(3, 3))
        scorer = EASEScorer(ds, W)
        np.testing.assert_allclose(scorer.score_all(0), W[0] + W[2], atol=1e-15)
        np.testing.assert_allclose(
            scorer.score_block(np.array([0, 1])), np.stack([W[0] + W[2], W[1]]), atol=1e-15
        )

    def test_catalog_mismatch_rejected(self, rng):
        ds = build_dataset([[0]], [[1]], 2)
        with pytest.raises(ValueError, match="catalog"):
            EASEScorer(ds, np.zeros((3, 3)))

"""Problem definitions, gradient oracles and shard handling."""

import numpy as np
import pytest

from leasgd.errors import ValidationError
from leasgd.problems import (
    DataShard,
    estimate_sigma1,
    full_gradient,
    full_loss,
    load_csv,
    loss,
    make_logistic,
    make_mlp,
    make_quadratic,
    make_shards,
    mlp_forward_backward,
    quadratic_shards,
    split_holdout,
    stochastic_gradient,
    two_blobs,
)


def power_iteration_extremes(A, iters=2000):
    """Independent eigenvalue oracle: power iteration for the largest
    eigenvalue, then power iteration on (c*I - A) for the smallest."""
    rng = np.random.default_rng(123)
    v = rng.standard_normal(A.shape[0])
    for _ in range(iters):
        v = A @ v
        v /= np.linalg.norm(v)
    lam_max = float(v @ A @ v)
    c = lam_max + 1.0
    B = c * np.eye(A.shape[0]) - A
    v = rng.standard_normal(A.shape[0])
    for _ in range(iters):
        v = B @ v
        v /= np.linalg.norm(v)
    lam_min = c - float(v @ B @ v)
    return lam_min, lam_max


def fd_gradient(f, w, h=1e-5):
    g = np.empty_like(w)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2.0 * h)
    return g


def quad_fixture(n=10, mu=1.0, lipschitz=3.0, seed=7, m=1, samples=20, noise=0.5):
    problem = make_quadratic(n, mu, lipschitz, seed)
    shards = quadratic_shards(problem, m, samples, noise, seed + 1)
    return problem, shards


class TestMakeQuadratic:
    def test_diagonal_system_solution(self):
        p = make_quadratic(2, 1.0, 3.0, seed=0)
        p.b = np.array([1.0, 3.0])
        p.optimum = p.b / p.diag
        assert np.allclose(p.diag * p.optimum, p.b)
        assert np.allclose(p.optimum, [1.0, 1.0])

    def test_identity_zero_case(self):
        p = make_quadratic(3, 1.0, 1.0, seed=0, b_scale=0.0)
        shard = quadratic_shards(p, 1, 5, 0.0, seed=1)[0]
        assert np.array_equal(p.optimum, np.zeros(3))
        assert full_loss(p, p.optimum, shard) == 0.0

    def test_eigenvalues_match_power_iteration_oracle(self):
        p = make_quadratic(10, 1.0, 3.0, seed=7)
        lam_min, lam_max = power_iteration_extremes(np.diag(p.diag))
        assert abs(lam_min - 1.0) <= 1e-12
        assert abs(lam_max - 3.0) <= 1e-12

    def test_gradient_zero_at_optimum(self):
        p, shards = quad_fixture(noise=0.0)
        g = full_gradient(p, p.optimum, shards[0])
        assert np.all(np.abs(g) <= 1e-13)

    def test_rejects_bad_spectrum(self):
        with pytest.raises(ValidationError):
            make_quadratic(4, 0.0, 1.0, seed=0)
        with pytest.raises(ValidationError):
            make_quadratic(4, -1.0, 1.0, seed=0)
        with pytest.raises(ValidationError):
            make_quadratic(4, 2.0, 1.0, seed=0)


class TestLoss:
    def test_quadratic_minimal_at_optimum(self):
        p, shards = quad_fixture(noise=0.0)
        base = full_loss(p, p.optimum, shards[0])
        rng = np.random.default_rng(0)
        for _ in range(20):
            w = p.optimum + rng.normal(scale=0.5, size=p.dimension)
            assert full_loss(p, w, shards[0]) >= base

    def test_logistic_symmetric_at_zero(self):
        X = np.array([[0.7, -1.2]])
        y = np.array([1], dtype=np.int64)
        p = make_logistic(X, y, reg_lambda=0.0)
        shard = DataShard(0, X, y, 0, 1)
        assert loss(p, np.zeros(2), shard, [0]) == pytest.approx(np.log(2.0), rel=1e-12)

    def test_logistic_regulariser_plugs_in(self):
        X, y = two_blobs(40, 3, 2.0, seed=5)
        shard = make_shards(X, y, 1)[0]
        w = np.zeros(3)
        w[0] = 2.0  # ||w||^2 = 4
        base = loss(make_logistic(X, y, 0.0), w, shard, shard.full_index)
        reg = loss(make_logistic(X, y, 0.1), w, shard, shard.full_index)
        assert reg == pytest.approx(base + 0.2, rel=1e-12)

    def test_empty_batch_rejected(self):
        p, shards = quad_fixture()
        with pytest.raises(ValidationError):
            loss(p, np.zeros(p.dimension), shards[0], [])


class TestStochasticGradient:
    def test_full_batch_is_exact(self):
        p, shards = quad_fixture(noise=0.5)
        rng = np.random.default_rng(3)
        w = rng.standard_normal(p.dimension)
        g = stochastic_gradient(p, w, shards[0], shards[0].sample_count, rng).gradient
        # shard deviations are centered, so the full batch sees the global b
        assert np.allclose(g, p.diag * w - p.b, atol=1e-12)

    def test_zero_at_optimum_origin_instance(self):
        p = make_quadratic(6, 1.0, 3.0, seed=2, b_scale=0.0)
        shard = quadratic_shards(p, 1, 10, 0.3, seed=3)[0]
        g = stochastic_gradient(
            p, p.optimum, shard, shard.sample_count, np.random.default_rng(0)
        ).gradient
        assert np.array_equal(g, np.zeros(6))

    def test_logistic_matches_finite_differences(self):
        X, y = two_blobs(30, 4, 3.0, seed=9)
        p = make_logistic(X, y, reg_lambda=0.05)
        shard = make_shards(X, y, 1)[0]
        rng = np.random.default_rng(11)
        w = rng.standard_normal(4)
        g = full_gradient(p, w, shard)
        fd = fd_gradient(lambda v: full_loss(p, v, shard), w)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)) <= 1e-5

    def test_zero_batch_rejected(self):
        p, shards = quad_fixture()
        with pytest.raises(ValidationError):
            stochastic_gradient(p, np.zeros(p.dimension), shards[0], 0,
                                np.random.default_rng(0))
        with pytest.raises(ValidationError):
            stochastic_gradient(p, np.zeros(p.dimension), shards[0],
                                shards[0].sample_count + 1, np.random.default_rng(0))


class TestMlp:
    def setup_method(self):
        self.X, self.y = two_blobs(40, 3, 4.0, seed=21)
        self.shard = make_shards(self.X, self.y, 1)[0]
        self.problem = make_mlp(3)

    def test_zero_weights_balanced_batch_gives_log2(self):
        idx = np.concatenate([np.nonzero(self.y == 0)[0][:5],
                              np.nonzero(self.y == 1)[0][:5]])
        value, _ = mlp_forward_backward(np.zeros(self.problem.dimension),
                                        self.shard, idx)
        assert value == pytest.approx(np.log(2.0), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        w = 0.3 * rng.standard_normal(self.problem.dimension)
        batch = np.arange(5)
        _, gs = mlp_forward_backward(w, self.shard, batch)
        fd = fd_gradient(lambda v: mlp_forward_backward(v, self.shard, batch)[0], w)
        denom = np.maximum(np.abs(fd), 1e-6)
        assert np.max(np.abs(gs.gradient - fd) / denom) <= 1e-4

    def test_duplicated_batch_is_mean_invariant(self):
        rng = np.random.default_rng(5)
        w = 0.3 * rng.standard_normal(self.problem.dimension)
        batch = np.arange(6)
        doubled = np.concatenate([batch, batch])
        l1, g1 = mlp_forward_backward(w, self.shard, batch)
        l2, g2 = mlp_forward_backward(w, self.shard, doubled)
        assert l1 == pytest.approx(l2, rel=1e-12)
        assert np.allclose(g1.gradient, g2.gradient, rtol=1e-12, atol=1e-15)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            mlp_forward_backward(np.zeros(10), self.shard, np.arange(3))


class TestEstimateSigma1:
    def test_full_batch_noise_free(self):
        p, shards = quad_fixture(noise=0.5)
        est = estimate_sigma1(p, [np.zeros(p.dimension)], shards[0],
                              shards[0].sample_count, 30, np.random.default_rng(0))
        assert est == 0.0

    def test_two_sample_shard_matches_enumeration(self):
        p = make_quadratic(4, 1.0, 2.0, seed=6)
        shard = quadratic_shards(p, 1, 2, 0.8, seed=7)[0]
        w = np.zeros(4)
        g_each = [p.diag * w - shard.inputs[i] for i in range(2)]
        g_full = full_gradient(p, w, shard)
        expected = 0.5 * sum(float(np.dot(g - g_full, g - g_full)) for g in g_each)
        est = estimate_sigma1(p, [w], shard, 1, 10_000, np.random.default_rng(8))
        assert est / 1.2 == pytest.approx(expected, rel=0.10)

    def test_monotone_in_batch_size(self):
        p, shards = quad_fixture(samples=40, noise=0.6)
        rng = np.random.default_rng(9)
        w = np.zeros(p.dimension)
        estimates = [
            estimate_sigma1(p, [w], shards[0], bs, 3000, rng)
            for bs in (1, 2, 5, 10, 40)
        ]
        assert all(a >= b for a, b in zip(estimates, estimates[1:]))

    def test_too_few_trials_rejected(self):
        p, shards = quad_fixture()
        with pytest.raises(ValidationError):
            estimate_sigma1(p, [np.zeros(p.dimension)], shards[0], 1, 29,
                            np.random.default_rng(0))


class TestInvariants:
    def test_gradient_correctness_at_random_points(self):
        rng = np.random.default_rng(30)
        # quadratic: full batch against the analytic map, very tight
        p, shards = quad_fixture(noise=0.4)
        for _ in range(20):
            w = rng.standard_normal(p.dimension)
            g = full_gradient(p, w, shards[0])
            assert np.allclose(g, p.diag * w - p.b, rtol=1e-10, atol=1e-12)
        # logistic and mlp against central differences
        X, y = two_blobs(30, 3, 3.0, seed=31)
        shard = make_shards(X, y, 1)[0]
        logp = make_logistic(X, y, 0.1)
        mlpp = make_mlp(3)
        for _ in range(20):
            w = rng.standard_normal(3)
            g = full_gradient(logp, w, shard)
            fd = fd_gradient(lambda v: full_loss(logp, v, shard), w)
            assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)) <= 1e-4
        for _ in range(5):
            w = 0.3 * rng.standard_normal(mlpp.dimension)
            g = full_gradient(mlpp, w, shard)
            fd = fd_gradient(lambda v: full_loss(mlpp, v, shard), w)
            assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)) <= 1e-4

    @pytest.mark.parametrize("kind", ["quadratic", "logistic"])
    def test_strong_convexity_witness(self, kind):
        rng = np.random.default_rng(32)
        if kind == "quadratic":
            p, shards = quad_fixture(noise=0.0)
            shard = shards[0]
        else:
            X, y = two_blobs(50, 4, 3.0, seed=33)
            shard = make_shards(X, y, 1)[0]
            p = make_logistic(X, y, reg_lambda=0.2)
        for _ in range(100):
            wi = rng.standard_normal(p.dimension)
            wj = rng.standard_normal(p.dimension)
            diff = wi - wj
            gap = float(
                np.dot(full_gradient(p, wi, shard) - full_gradient(p, wj, shard), diff)
            )
            nrm = float(np.dot(diff, diff))
            assert p.mu * nrm <= gap * (1 + 1e-10) + 1e-12
            assert gap <= p.lipschitz * nrm * (1 + 1e-10) + 1e-12

    def test_size_one_gradients_unbiased(self):
        p = make_quadratic(4, 1.0, 2.0, seed=40)
        shard = quadratic_shards(p, 1, 10, 0.5, seed=41)[0]
        w = np.full(4, 0.7)
        exact = full_gradient(p, w, shard)
        rng = np.random.default_rng(42)
        draws = np.stack(
            [stochastic_gradient(p, w, shard, 1, rng).gradient for _ in range(100_000)]
        )
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - exact) <= 3.0 * se + 1e-12)

    def test_shards_partition_dataset(self):
        X, y = two_blobs(103, 3, 2.0, seed=50)
        shards = make_shards(X, y, 7)
        ranges = [(s.index_start, s.index_stop) for s in shards]
        assert ranges[0][0] == 0 and ranges[-1][1] == 103
        for (a, b), (c, d) in zip(ranges, ranges[1:]):
            assert b == c and a < b
        assert all(s.sample_count >= 1 for s in shards)
        assert sum(s.sample_count for s in shards) == 103


class TestDataHandling:
    def test_csv_round_trip(self, tmp_path):
        X, y = two_blobs(20, 3, 2.0, seed=60)
        path = tmp_path / "data.csv"
        with open(path, "w") as fh:
            fh.write("f0,f1,f2,label\n")
            for row, lab in zip(X, y):
                fh.write(",".join(format(v, ".17g") for v in row) + f",{lab}\n")
        X2, y2 = load_csv(path)
        assert np.allclose(X, X2)
        assert np.array_equal(y, y2)

    def test_two_blobs_balanced_and_separated(self):
        X, y = two_blobs(200, 3, 6.0, seed=61)
        assert y.sum() == 100
        assert X[y == 1, 0].mean() - X[y == 0, 0].mean() == pytest.approx(6.0, abs=0.5)

    def test_holdout_split(self):
        X, y = two_blobs(100, 2, 2.0, seed=62)
        (Xtr, ytr), (Xte, yte) = split_holdout(X, y, 0.2)
        assert len(Xtr) == 80 and len(Xte) == 20
        assert np.array_equal(np.concatenate([ytr, yte]), y)

    def test_quadratic_shards_centered(self):
        p = make_quadratic(5, 1.0, 2.0, seed=63)
        shards = quadratic_shards(p, 3, 12, 0.4, seed=64)
        for s in shards:
            assert np.allclose(s.inputs.mean(axis=0), p.b, atol=1e-12)

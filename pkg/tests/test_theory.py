"""Bound constants, bound evaluation, distance series and rate comparison."""

import numpy as np
import pytest

from leasgd import harness
from leasgd.errors import ValidationError
from leasgd.harness import ensemble_theory_params
from leasgd.optimizer import HyperParams
from leasgd.problems import make_mlp, make_quadratic
from leasgd.theory import (
    check_bound_dominance,
    derive_theory_params,
    distance_bound,
    mean_square_distance,
    measure_distance_series,
    privacy_tradeoff_floor,
    rate_comparison,
)


def reference_params(sigma1_sq=0.0, eta=0.1, rho=0.5, p=4, mu=1.0, lipschitz=3.0):
    problem = make_quadratic(4, mu, lipschitz, seed=0, b_scale=0.0)
    hp = HyperParams(eta=eta, rho=rho, iterations=1)
    inits = [np.full(4, 1.0), np.full(4, -2.0)]
    return derive_theory_params(problem, hp, p, sigma1_sq, inits)


class TestDeriveParams:
    def test_direct_substitution(self):
        tp = reference_params()
        assert tp.gamma == pytest.approx(0.15, rel=1e-12)
        assert tp.alpha == pytest.approx(0.05, rel=1e-12)
        assert tp.beta == pytest.approx(0.2, rel=1e-12)
        assert tp.h == pytest.approx(0.68, rel=1e-12)
        assert tp.k_const == pytest.approx(0.17, rel=1e-12)
        assert tp.k_const + tp.h == pytest.approx(1.0 - tp.gamma, rel=1e-15)
        assert tp.c0 == pytest.approx(16.0)
        assert tp.d0 == pytest.approx(10.0)

    def test_rho_zero_degenerates(self):
        tp = reference_params(rho=0.0)
        assert tp.alpha == 0.0 and tp.beta == 0.0
        assert 0.0 < tp.h < 1.0

    def test_eta_boundary_guard(self):
        # beta = 4 * eta * 0.5; limit = 2(1-beta)/4; eta = 0.34 exceeds it
        with pytest.raises(ValidationError):
            reference_params(eta=0.34)

    def test_mlp_refused(self):
        hp = HyperParams(eta=0.1, rho=0.5, iterations=1)
        with pytest.raises(ValidationError):
            derive_theory_params(make_mlp(3), hp, 4, 0.0, [np.zeros(82)])

    def test_identity_holds_across_random_configs(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            eta = float(rng.uniform(0.01, 0.3))
            rho = float(rng.uniform(0.0, 1.0))
            p = int(rng.integers(1, 9))
            if p * eta * rho >= 1.0:
                continue
            mu = float(rng.uniform(0.5, 2.0))
            L = mu * float(rng.uniform(1.0, 4.0))
            if eta > 2 * (1 - p * eta * rho) / (mu + L):
                continue
            tp = reference_params(eta=eta, rho=rho, p=p, mu=mu, lipschitz=L)
            assert abs(tp.k_const + tp.h - (1.0 - tp.gamma)) <= 1e-15

    def test_h_increases_with_p_toward_its_limit(self):
        hs = [reference_params(p=p).h for p in range(1, 8)]
        gamma = reference_params().gamma
        for a, b in zip(hs, hs[1:]):
            assert a < b < 1.0 - gamma

    def test_noise_floor_independent_of_p(self):
        floors = [
            reference_params(sigma1_sq=2.0, p=p).eta ** 2 * 2.0
            / reference_params(sigma1_sq=2.0, p=p).gamma
            for p in range(1, 6)
        ]
        assert np.allclose(floors, floors[0], rtol=1e-14)


class TestBound:
    def test_t_zero_collapses_to_d0(self):
        tp = reference_params(sigma1_sq=0.7)
        assert distance_bound(tp, 0) == pytest.approx(tp.d0, rel=1e-14)

    def test_noiseless_terms_decay_to_zero(self):
        tp = reference_params(sigma1_sq=0.0)
        ts = np.array([0, 10, 100, 1000])
        vals = distance_bound(tp, ts)
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] <= tp.d0 * tp.h ** 1000 + tp.c0 * (1 - tp.gamma) ** 1000
        assert distance_bound(tp, 5000) < 1e-100

    def test_noise_floor_limit(self):
        tp = reference_params(sigma1_sq=3.0)
        floor = tp.eta ** 2 * tp.sigma1_sq / tp.gamma
        assert distance_bound(tp, 10 ** 6) == pytest.approx(floor, rel=1e-12)

    def test_terms_are_nonnegative_and_monotone(self):
        tp = reference_params(sigma1_sq=0.5)
        ts = np.arange(0, 400)
        first = tp.h ** ts * tp.d0
        floor = tp.eta ** 2 * tp.sigma1_sq / tp.gamma
        second = (tp.c0 - floor) * (1 - tp.gamma) ** ts * (
            1 - (tp.p / (tp.p + 1)) ** ts
        )
        third = floor * (1 - tp.h ** ts)
        assert np.all(first >= 0) and np.all(second >= 0) and np.all(third >= 0)
        assert np.all(np.diff(first) <= 0)
        # the second term rises from 0 then decays; it must vanish in the tail
        assert second[-1] < second[ts[np.argmax(second)]]


class TestDistanceSeries:
    def test_two_worker_example(self):
        assert mean_square_distance(
            [np.array([1.0, 0.0]), np.array([0.0, 1.0])], np.zeros(2)
        ) == pytest.approx(1.0, rel=1e-15)

    def test_all_at_optimum(self):
        w_star = np.array([0.3, -0.7])
        assert mean_square_distance([w_star.copy()] * 4, w_star) == 0.0

    def test_single_sgd_contraction_series(self):
        cfg = harness.config_from_dict({
            "algorithm": "local_sgd", "mode": "theory",
            "problem": {"kind": "quadratic", "dimension": 1, "mu": 1.0,
                        "lipschitz": 1.0, "b_scale": 0.0, "data_seed": 2,
                        "samples_per_worker": 4, "grad_noise": 0.0},
            "m": 1, "follower_count": 0,
            "hp": {"eta": 0.1, "rho": 0.0, "iterations": 500},
            "seeds": [0],
        })
        trace = harness.run_one(cfg, run_seed=0)
        series = measure_distance_series([trace])
        expect = series.d[0] * 0.81 ** np.arange(500)
        assert np.allclose(series.d, expect, rtol=1e-11)

    def test_requires_distance_column(self):
        cfg = harness.config_from_dict({
            "algorithm": "local_sgd", "mode": "explore",
            "problem": {"kind": "quadratic", "dimension": 2, "mu": 1.0,
                        "lipschitz": 2.0, "data_seed": 2,
                        "samples_per_worker": 4, "grad_noise": 0.0},
            "m": 1, "follower_count": 0,
            "hp": {"eta": 0.1, "rho": 0.0, "iterations": 5},
            "seeds": [0],
        })
        trace = harness.run_one(cfg, run_seed=0)
        with pytest.raises(ValidationError):
            measure_distance_series([trace])
        with pytest.raises(ValidationError):
            measure_distance_series([])


class TestBoundDominance:
    def make_ensemble(self, privacy=None, seeds=60, iterations=300):
        spec = {
            "algorithm": "leasgd_sync", "mode": "theory",
            "problem": {"kind": "quadratic", "dimension": 1, "mu": 1.0,
                        "lipschitz": 1.0, "b_scale": 0.0, "data_seed": 6,
                        "samples_per_worker": 10, "grad_noise": 0.0},
            "m": 5, "follower_count": 1,
            "hp": {"eta": 0.05, "rho": 0.5, "tau": 1, "kappa": 10,
                   "iterations": iterations},
            "seeds": list(range(seeds)),
        }
        if privacy:
            spec["privacy"] = privacy
        cfg = harness.config_from_dict(spec)
        traces, _ = harness.run_experiment(cfg)
        problem, _, _ = harness.build_problem(cfg.problem, cfg.m)
        return cfg, traces, problem

    def test_noiseless_run_passes_at_5_percent(self):
        cfg, traces, problem = self.make_ensemble()
        tp = ensemble_theory_params(problem, cfg.hp, 4, 0.0, traces)
        report = check_bound_dominance(measure_distance_series(traces), tp, 0.05)
        assert report["pass"], report
        assert report["first_violation_t"] is None

    def test_impossible_tightening_fails(self):
        cfg, traces, problem = self.make_ensemble(seeds=10, iterations=50)
        tp = ensemble_theory_params(problem, cfg.hp, 4, 0.0, traces)
        report = check_bound_dominance(measure_distance_series(traces), tp, -0.5)
        assert not report["pass"]
        assert report["first_violation_t"] == 0

    def test_private_run_passes_with_inflated_variance(self):
        # 1-d instance keeps the per-coordinate mechanism aligned with the
        # full-vector variance bookkeeping, and C is wide enough that
        # clipping stays inactive along the whole trajectory
        privacy = {"clip": 2.0, "sigma2": 0.5, "delta": 1e-5}
        cfg, traces, problem = self.make_ensemble(privacy=privacy, seeds=100,
                                                  iterations=400)
        sigma_dp_sq = (2.0 * 0.5) ** 2
        tp = ensemble_theory_params(problem, cfg.hp, 4, 0.0 + sigma_dp_sq, traces)
        report = check_bound_dominance(measure_distance_series(traces), tp, 0.10)
        assert report["pass"], report


class TestPrivacyFloor:
    def test_zero_noise(self):
        tp = reference_params()
        assert privacy_tradeoff_floor(tp, 1.0, 0.0) == 0.0

    def test_product_invariance(self):
        tp = reference_params()
        a = privacy_tradeoff_floor(tp, 1.0, 4.0)
        b = privacy_tradeoff_floor(tp, 2.0, 2.0)
        assert a == pytest.approx(b, rel=1e-14)

    def test_reference_value(self):
        tp = reference_params()
        assert privacy_tradeoff_floor(tp, 1.0, 4.0) == pytest.approx(
            0.16 / 0.15, rel=1e-12
        )


class TestRateComparison:
    def test_reference_crossover(self):
        report = rate_comparison(0.68, 4, list(range(1, 1001)))
        assert report["crossover_t"] == 11
        assert report["monotone_decreasing_from"] == 3
        assert report["product_final"] < 1e-100

    def test_crossover_grows_as_h_approaches_one(self):
        crossings = []
        for h in (0.9, 0.99, 0.999):
            report = rate_comparison(h, 4, list(range(1, 30001)))
            assert report["crossover_t"] is not None
            crossings.append(report["crossover_t"])
        assert crossings[0] < crossings[1] < crossings[2]

    def test_domain_guards(self):
        with pytest.raises(ValidationError):
            rate_comparison(1.0, 4, [1, 2, 3])
        with pytest.raises(ValidationError):
            rate_comparison(0.5, 4, [0, 1, 2])

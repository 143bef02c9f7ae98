import math

import numpy as np
import pytest

from leafctl.control import (
    LengthMismatch,
    NoLeavesRemaining,
    ZeroAlpha,
    allocate_equal_split,
    linear_cost_degeneracy_check,
    optimal_density,
    predict_final,
)
from leafctl.model import BeliefState, BuildPlan, ProcessModel


class TestAllocateEqualSplit:
    def test_fresh_stack(self):
        assert allocate_equal_split(30.0, 0.0, 3) == 10.0

    def test_target_already_met(self):
        assert allocate_equal_split(30.0, 30.0, 2) == 0.0

    def test_partial_progress(self):
        assert allocate_equal_split(30.0, 11.55, 2) == pytest.approx(9.225, abs=1e-12)

    def test_no_leaves_remaining(self):
        with pytest.raises(NoLeavesRemaining):
            allocate_equal_split(30.0, 10.0, 0)


class TestOptimalDensity:
    def test_first_leaf_of_3_30(self, bench_model, plan_3_30):
        d = optimal_density(plan_3_30, bench_model, 0.0, 0)
        assert d.recommended_density == pytest.approx(17.705, abs=1e-3)
        assert not d.clamped

    def test_second_leaf_after_raw_reading(self, bench_model, plan_3_30):
        # published value 15.186 carries the source's rounding of alpha/beta
        d = optimal_density(plan_3_30, bench_model, 11.55, 1)
        assert d.recommended_density == pytest.approx(15.186, abs=0.02)

    def test_third_leaf(self, bench_model, plan_3_30):
        d = optimal_density(plan_3_30, bench_model, 18.65, 2)
        assert d.recommended_density == pytest.approx(22.108, abs=0.02)

    def test_zero_alpha_rejected(self, plan_3_30):
        with pytest.raises(ZeroAlpha):
            optimal_density(plan_3_30, ProcessModel(0.0, 1.0, 0.1, 0.1), 0.0, 0)

    def test_clamps_to_bounds_with_flag(self, bench_model):
        plan = BuildPlan(n=3, target_k=30.0, d_min=16.0, d_max=100.0)
        d = optimal_density(plan, bench_model, 11.55, 1)
        assert d.clamped
        assert d.recommended_density == 16.0
        assert d.unclamped_density == pytest.approx(15.186, abs=0.02)

    def test_increment_rounding_sets_flag(self, bench_model, plan_3_30):
        plan = BuildPlan(n=3, target_k=30.0, density_increment=1.0)
        d = optimal_density(plan, bench_model, 0.0, 0)
        assert d.recommended_density == 18.0
        assert d.clamped

    def test_target_exactness(self, bench_model):
        # prediction through the unclamped density returns the target exactly
        rng = np.random.default_rng(5)
        plan = BuildPlan(n=4, target_k=35.0)
        for _ in range(200):
            mu = float(rng.uniform(-5, 40))
            i = int(rng.integers(0, plan.n))
            d = optimal_density(plan, bench_model, mu, i)
            remaining = plan.n - i
            belief = BeliefState(step=i, mean=mu, variance=0.0)
            pred = predict_final(plan, bench_model, belief, [d.unclamped_density] * remaining)
            assert pred["mean"] == pytest.approx(plan.target_k, abs=1e-9)

    def test_monotone_in_target_and_estimate(self, bench_model):
        ks = np.linspace(10, 60, 30)
        ds = [optimal_density(BuildPlan(n=3, target_k=float(k)), bench_model, 5.0, 1)
              .recommended_density for k in ks]
        assert all(b >= a for a, b in zip(ds, ds[1:]))
        mus = np.linspace(0, 25, 30)
        plan = BuildPlan(n=3, target_k=30.0)
        ds = [optimal_density(plan, bench_model, float(m), 1).recommended_density for m in mus]
        assert all(b <= a for a, b in zip(ds, ds[1:]))

    def test_open_loop_consistency(self, bench_model):
        for n, k in ((3, 30.0), (3, 40.0), (5, 55.0)):
            plan = BuildPlan(n=n, target_k=k)
            d = optimal_density(plan, bench_model, 0.0, 0)
            expected = (k / n - bench_model.beta) / bench_model.alpha
            assert d.unclamped_density == pytest.approx(expected, rel=1e-12)


class TestPredictFinal:
    def test_open_loop_prediction_hits_target(self, bench_model, plan_3_30):
        pred = predict_final(plan_3_30, bench_model, BeliefState.initial(), [17.705] * 3)
        assert pred["mean"] == pytest.approx(30.0, abs=2e-3)
        assert pred["sd"] == pytest.approx(math.sqrt(3) * bench_model.sigma_p, rel=1e-12)

    def test_no_remaining_leaves(self, bench_model):
        plan = BuildPlan(n=2, target_k=20.0)
        belief = BeliefState(step=2, mean=19.4, variance=0.09)
        pred = predict_final(plan, bench_model, belief, [])
        assert pred["mean"] == 19.4
        assert pred["sd"] == pytest.approx(0.3, rel=1e-12)

    def test_consistent_posterior_and_density_return_target(self, bench_model, plan_3_30):
        # values derived by exact rational evaluation of the chained recursion
        # (reading 11.53 averaged over r=5, then the resulting density)
        belief = BeliefState(step=1, mean=11.4098069589990, variance=0.0879178637264)
        pred = predict_final(plan_3_30, bench_model, belief, [15.41098770094526] * 2)
        assert pred["mean"] == pytest.approx(30.0, abs=1e-3)

    def test_length_mismatch(self, bench_model, plan_3_30):
        with pytest.raises(LengthMismatch):
            predict_final(plan_3_30, bench_model, BeliefState.initial(), [17.705] * 2)


class TestDegeneracy:
    def test_total_density_constant_across_allocations(self, bench_model, plan_3_30):
        report = linear_cost_degeneracy_check(plan_3_30, bench_model)
        assert not report.vacuous
        assert len(report.allocations) >= 3
        # ((K - mu) - n*beta)/alpha, by hand
        assert report.density_sums[0] == pytest.approx(53.1145, abs=1e-3)
        assert report.max_spread <= 1e-9

    def test_zero_gap_means_zero_total(self):
        model = ProcessModel(alpha=1.0, beta=0.0, sigma_p=0.1, sigma_o=0.1)
        plan = BuildPlan(n=3, target_k=30.0)
        report = linear_cost_degeneracy_check(plan, model, current_mean=30.0)
        assert all(s == pytest.approx(0.0, abs=1e-12) for s in report.density_sums)

    def test_single_leaf_is_vacuous(self, bench_model):
        plan = BuildPlan(n=1, target_k=10.0)
        report = linear_cost_degeneracy_check(plan, bench_model)
        assert report.vacuous

    def test_equal_split_minimizes_squared_densities(self, bench_model, plan_3_30):
        # no feasible allocation beats the equal split on sum of squares
        rng = np.random.default_rng(21)
        for i, mu in ((0, 0.0), (1, 11.55)):
            remaining = plan_3_30.n - i
            d_eq = optimal_density(plan_3_30, bench_model, mu, i).unclamped_density
            base = remaining * d_eq**2
            if remaining < 2:
                continue
            for _ in range(1000):
                bump = rng.normal(size=remaining)
                bump -= bump.mean()  # zero-sum keeps the constraint satisfied
                alloc = d_eq + bump
                assert float(np.sum(alloc**2)) >= base - 1e-9

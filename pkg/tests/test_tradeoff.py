"""Cost/compute search: feasibility evaluation and ray bisection."""

import numpy as np
import pytest

from horizonlab.model import params_from_probabilities
from horizonlab.tradeoff import (
    CostBin,
    CostModel,
    distribution_cost,
    evaluate_distribution,
    tradeoff_search,
)
from horizonlab.training import make_schedule


def base_config(H=3, target=0.6, N=256):
    return make_schedule(
        "uniform_mix", H, target, N=N, eta=0.5, q_oracle=True,
        max_updates_per_stage=4000,
    )


class TestCostModel:
    def test_default_costs_are_lengths(self):
        cm = CostModel.with_default_costs([1, 2, 3], 1000, 0.5)
        assert [b.cost for b in cm.bins] == [1.0, 2.0, 3.0]

    def test_duplicate_lengths_rejected(self):
        with pytest.raises(ValueError):
            CostModel(bins=(CostBin(1, 1.0), CostBin(1, 2.0)), budget_step_tokens=10, target=0.5)

    def test_per_bin_targets(self):
        cm = CostModel(
            bins=(CostBin(1, 1.0), CostBin(2, 2.0)),
            budget_step_tokens=10,
            target=(0.9, 0.5),
        )
        assert cm.targets() == (0.9, 0.5)
        with pytest.raises(ValueError):
            CostModel(bins=(CostBin(1, 1.0),), budget_step_tokens=10, target=(0.9, 0.5))

    def test_distribution_cost(self):
        cm = CostModel.with_default_costs([1, 2, 3], 1000, 0.5)
        assert distribution_cost(np.array([1 / 3] * 3), cm.bins) == pytest.approx(2.0)


class TestSearch:
    def test_trivially_easy_target_feasible_everywhere(self):
        # Target already met at init: every distribution (all ray ends) is
        # feasible, so each boundary sits at the end of its ray.
        params = params_from_probabilities([0.9, 0.85, 0.8])
        cm = CostModel.with_default_costs([1, 2, 3], 10_000, 0.3)
        report = tradeoff_search(params, cm, base_config(target=0.3), n_rays=4, seed=1)
        assert report.origin_feasible
        for ray in report.rays:
            assert ray.boundary_t == pytest.approx(ray.t_max)
            assert ray.boundary.reached_target

    def test_zero_budget_infeasible_at_origin(self):
        params = params_from_probabilities([0.65, 0.35, 0.35])
        cm = CostModel.with_default_costs([1, 2, 3], 0, 0.6)
        report = tradeoff_search(params, cm, base_config(), n_rays=4, seed=1)
        assert not report.origin_feasible
        assert report.rays == []
        assert len(report.evaluations) == 1

    def test_search_maps_cost_for_compute(self):
        params = params_from_probabilities([0.65, 0.35, 0.35])
        cm = CostModel.with_default_costs([1, 2, 3], 100_000, 0.6)
        report = tradeoff_search(params, cm, base_config(), n_rays=4, tol=1 / 32, seed=7)
        assert report.origin_feasible
        uniform = report.origin
        cheaper = [
            b for b in report.boundary_points()
            if b.distribution_cost < uniform.distribution_cost - 1e-9
        ]
        assert cheaper, "rays toward the cheap side must find cheaper feasible points"
        more_compute = [b for b in cheaper if b.step_tokens > uniform.step_tokens]
        assert len(more_compute) >= 0.8 * len(cheaper)
        assert report.monotonicity_violations() <= max(1, len(report.rays) // 20)

    def test_boundary_points_verified_by_runs(self):
        params = params_from_probabilities([0.65, 0.35, 0.35])
        cm = CostModel.with_default_costs([1, 2, 3], 60_000, 0.6)
        report = tradeoff_search(params, cm, base_config(), n_rays=3, seed=3)
        for ray in report.rays:
            assert ray.boundary.reached_target
            assert ray.boundary.t <= ray.t_max + 1e-12
            # boundary weights lie on the stated ray position
            w = np.full(3, 1 / 3) + ray.boundary.t * np.array(ray.direction)
            w = np.clip(w, 0, None)
            w /= w.sum()
            assert np.allclose(w, ray.boundary.weights, atol=1e-9)

    def test_votes_must_be_odd(self):
        params = params_from_probabilities([0.9, 0.8])
        cm = CostModel.with_default_costs([1, 2], 1000, 0.5)
        with pytest.raises(ValueError):
            evaluate_distribution(params, cm, base_config(H=2, target=0.5),
                                  np.array([0.5, 0.5]), seed=0, votes=2)

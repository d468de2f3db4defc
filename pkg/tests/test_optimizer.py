#!/usr/bin/env python3
"""
Tests for the parameter space, exhaustive search and the cross-entropy method
"""

import numpy as np
import pytest

from cmc_explore import optimizer
from cmc_explore.core import EstimatorConfig
from cmc_explore.environments import build_example
from cmc_explore.exceptions import CapacityError
from cmc_explore.measures import InfoMeasure
from cmc_explore.optimizer import (
    CandidateEvaluator,
    CemConfig,
    CemState,
    ParamSpace,
    cem_generate,
    cem_optimize,
    cem_update,
    exhaustive_search,
    refine_search,
)
from cmc_explore.policies import ControlSetParams, ParametricPolicy, ParamShape
from cmc_explore.simulator import SimConfig, run_trajectory


@pytest.fixture
def measure():
    return InfoMeasure(cfg=EstimatorConfig())


def single_entry_space(bounds):
    return ParamSpace(shape=ParamShape(num_entries=1), bounds=bounds)


class TestParamSpace:
    """Ranges, enumeration and canonical ordering of parameter vectors"""

    def test_for_shape_uses_full_ranges(self):
        space = ParamSpace.for_shape(ParamShape(num_entries=1), 2, 2, 20)
        assert space.bounds == ((1, 2), (1, 2), (1, 20))
        assert space.size == 80
        assert next(iter(space.enumerate())) == (1, 1, 1)

    def test_shared_time_range(self):
        space = ParamSpace.for_shape(
            ParamShape(num_entries=3, shared_time_constant=True), 25, 4, 400, time_range=(300, 400)
        )
        assert len(space.bounds) == 7
        assert space.bounds[-1] == (300, 400)

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            single_entry_space(((1, 2), (1, 2)))
        with pytest.raises(ValueError):
            single_entry_space(((2, 1), (1, 2), (1, 5)))
        with pytest.raises(ValueError):
            single_entry_space(((0, 1), (1, 2), (1, 5)))

    def test_canonicalize(self):
        space = ParamSpace.for_shape(ParamShape(num_entries=2), 5, 4, 30)
        assert space.canonicalizable
        assert space.canonicalize((2, 1, 1, 2, 5, 3)) == (1, 2, 2, 1, 3, 5)

    def test_canonicalize_keeps_vector_for_mixed_ranges(self):
        space = ParamSpace(
            shape=ParamShape(num_entries=2),
            bounds=((1, 3), (4, 5), (1, 2), (1, 2), (1, 10), (1, 10)),
        )
        assert not space.canonicalizable
        assert space.canonicalize((3, 4, 1, 2, 5, 6)) == (3, 4, 1, 2, 5, 6)


class TestCemSteps:
    """Candidate generation and probability updates"""

    def test_generate_extremes(self):
        space = single_entry_space(((1, 4), (2, 3), (5, 9)))
        rng = np.random.default_rng(0)
        low = CemState.initial(space, CemConfig(initial_p=0.0))
        high = CemState.initial(space, CemConfig(initial_p=1.0))
        assert set(cem_generate(low, space, 20, rng)) == {(1, 2, 5)}
        assert set(cem_generate(high, space, 20, rng)) == {(4, 3, 9)}

    def test_generate_mean(self):
        space = single_entry_space(((1, 1), (1, 1), (1, 21)))
        state = CemState.initial(space, CemConfig(initial_p=0.5))
        candidates = cem_generate(state, space, 10_000, np.random.default_rng(4))
        times = np.array([c[2] for c in candidates])
        assert times.mean() == pytest.approx(11.0, abs=0.3)
        assert times.min() >= 1
        assert times.max() <= 21

    def test_update_from_identical_elites(self):
        space = single_entry_space(((1, 1), (1, 11), (1, 21)))
        state = CemState.initial(space)
        updated = cem_update(state, [(1, 4, 21)] * 5)
        # width-zero range keeps its probability
        assert updated.p[0] == 0.5
        assert updated.p[1] == pytest.approx(0.3)
        assert updated.p[2] == pytest.approx(1.0)
        assert updated.iteration == state.iteration + 1

    def test_update_midpoint(self):
        space = single_entry_space(((1, 3), (1, 3), (1, 3)))
        updated = cem_update(CemState.initial(space), [(1, 1, 1), (3, 3, 3)])
        assert np.allclose(updated.p, 0.5)

    def test_update_needs_elites(self):
        space = single_entry_space(((1, 3), (1, 3), (1, 3)))
        with pytest.raises(ValueError):
            cem_update(CemState.initial(space), [])

    def test_state_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            CemState(lower=np.ones(1, dtype=np.int64), trials=np.ones(1, dtype=np.int64), p=np.array([1.5]))

    def test_num_elites(self):
        assert CemConfig(population=100, elite_fraction=0.1).num_elites == 10
        assert CemConfig(population=5, elite_fraction=0.01).num_elites == 1


def test_cem_on_separable_objective_reaches_bounds():
    """Targets at the range ends pull every probability to 0 or 1"""
    space = single_entry_space(((1, 10), (1, 10), (1, 10)))
    targets = np.array([1, 10, 1])
    cfg = CemConfig(population=100, elite_fraction=0.1)
    rng = np.random.default_rng(9)
    state = CemState.initial(space, cfg)
    for _ in range(100):
        candidates = cem_generate(state, space, cfg.population, rng)
        scores = [-float(np.abs(np.array(c) - targets).sum()) for c in candidates]
        order = sorted(range(len(candidates)), key=lambda c: -scores[c])
        updated = cem_update(state, [candidates[c] for c in order[: cfg.num_elites]])
        delta = float(np.max(np.abs(updated.p - state.p)))
        state = updated
        if delta < cfg.tolerance:
            break
    assert np.all(np.minimum(state.p, 1.0 - state.p) < 1e-3)
    assert np.all(np.abs(state.p - np.array([0.0, 1.0, 0.0])) < 1e-3)


class TestExample1Search:
    """One restriction entry on the two-state chain at horizon 20"""

    def test_exhaustive_finds_optimum(self, measure, mocker):
        spy = mocker.spy(optimizer, "evaluate_objective")
        bundle = build_example(1)
        space = ParamSpace.for_shape(bundle.param_shape, 2, 2, 20)
        result = exhaustive_search(bundle.cmc, space, measure, 0, SimConfig(horizon=20))
        assert result.r == (1, 1, 7)
        assert result.method == "exhaustive"
        # vectors with the same effective policy share one evaluation
        assert result.evaluations < space.size
        assert spy.call_count == result.evaluations
        assert result.to_record()["r"] == [1, 1, 7]

    def test_refine_from_poor_start(self, measure):
        bundle = build_example(1)
        space = ParamSpace.for_shape(bundle.param_shape, 2, 2, 20)
        cfg = SimConfig(horizon=20)
        best = exhaustive_search(bundle.cmc, space, measure, 0, cfg)
        evaluator = CandidateEvaluator(bundle.cmc, space, measure, 0, cfg)
        r, score, sweeps = refine_search(evaluator, (1, 1, 2))
        assert r == (1, 1, 7)
        assert score.mean == pytest.approx(best.objective.mean, abs=1e-12)
        assert sweeps == 2

    def test_cem_stops_when_best_stalls(self, measure):
        bundle = build_example(1)
        space = ParamSpace.for_shape(bundle.param_shape, 2, 2, 20)
        cem = CemConfig(seed=3, patience=1, tolerance=1e-12, refine=False)
        result = cem_optimize(bundle.cmc, space, measure, 0, SimConfig(horizon=20), cem)
        assert 2 <= result.iterations < cem.max_iterations
        assert result.trace[-1].best_objective == result.trace[-2].best_objective
        assert result.refine_sweeps == 0

    def test_degenerate_space(self, measure):
        bundle = build_example(1)
        space = single_entry_space(((1, 1), (1, 1), (7, 7)))
        result = cem_optimize(bundle.cmc, space, measure, 0, SimConfig(horizon=20))
        assert result.r == (1, 1, 7)
        assert result.iterations == 1

    def test_cem_matches_exhaustive(self, measure):
        bundle = build_example(1)
        space = ParamSpace.for_shape(bundle.param_shape, 2, 2, 20)
        cfg = SimConfig(horizon=20)
        best = exhaustive_search(bundle.cmc, space, measure, 0, cfg)
        result = cem_optimize(bundle.cmc, space, measure, 0, cfg, CemConfig(seed=1))
        assert result.objective.mean == pytest.approx(best.objective.mean, abs=1e-12)
        assert result.method == "cem"
        assert len(result.trace) == result.iterations
        best_so_far = [row.best_objective for row in result.trace]
        assert best_so_far == sorted(best_so_far)


def test_exhaustive_capacity_guard(measure):
    bundle = build_example(4)
    space = ParamSpace.for_shape(bundle.param_shape, bundle.cmc.num_states, bundle.cmc.num_controls, 400)
    with pytest.raises(CapacityError):
        exhaustive_search(bundle.cmc, space, measure, bundle.entrance, SimConfig(horizon=400))


def test_invalid_candidates_are_skipped(measure):
    """(1, 1, t) empties A-bar's control set in Example 6 and scores -inf"""
    bundle = build_example(6)
    space = single_entry_space(((1, 2), (1, 1), (5, 5)))
    result = exhaustive_search(bundle.cmc, space, measure, 0, SimConfig(horizon=10, num_trajectories=20))
    assert result.r == (2, 1, 5)


@pytest.mark.slow
def test_cem_on_example2(measure):
    """Three restriction entries on the four-state chain: one per forward move"""
    bundle = build_example(2)
    N = 40
    space = ParamSpace.for_shape(bundle.param_shape, bundle.cmc.num_states, bundle.cmc.num_controls, N)
    result = cem_optimize(bundle.cmc, space, measure, 0, SimConfig(horizon=N), CemConfig(seed=0))
    assert result.iterations <= 50
    params = ControlSetParams.from_vector(result.r, bundle.param_shape)
    assert {(e.state + 1, e.control + 1) for e in params.entries} == {(1, 1), (2, 2), (3, 3)}
    policy = ParametricPolicy.for_cmc(bundle.cmc, params, measure)
    trajectory = run_trajectory(bundle.cmc, policy, 0, None, SimConfig(horizon=N))
    assert trajectory.total_h == pytest.approx(result.objective.mean)
    assert trajectory.final_missing_information == pytest.approx(1.58, abs=0.05)


if __name__ == "__main__":
    pytest.main([__file__])

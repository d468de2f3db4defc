#!/usr/bin/env python3
"""
Tests for discounted shortest-path planning by policy iteration
"""

import itertools

import numpy as np
import pytest

from cmc_explore.core import CountTensor
from cmc_explore.environments import build_example, shortest_path
from cmc_explore.exceptions import NumericError
from cmc_explore.planner import (
    PlanningProblem,
    extract_path,
    plan_exit,
    policy_evaluation,
    policy_improvement,
    policy_iteration,
    value_iteration,
)

EXAMPLE4_PATH = [3, 8, 9, 10, 15, 14, 13, 12, 17, 16, 21, 22, 23]
MODIFIED_MAZE_PATH = [3, 8, 9, 10, 15, 20, 25, 24, 23]


def stay_or_goal(stay_probability: float) -> PlanningProblem:
    """State 0 costs 1 per period, control 0 reaches the goal w.p. 1 - stay_probability, control 1 stays"""
    transitions = np.zeros((2, 2, 2))
    transitions[0, 0] = [stay_probability, 1.0 - stay_probability]
    transitions[1, 0, 0] = 1.0
    transitions[:, 1, 1] = 1.0
    return PlanningProblem(
        transitions=transitions, costs=np.array([1.0, 0.0]), discount=0.99, admissible=((0, 1), (0, 1))
    )


def random_problem(seed: int, num_states: int = 5, num_controls: int = 3) -> PlanningProblem:
    rng = np.random.default_rng(seed)
    transitions = rng.dirichlet(np.ones(num_states), size=(num_controls, num_states))
    costs = rng.uniform(0.5, 2.0, size=num_states)
    costs[-1] = 0.0
    admissible = tuple(tuple(range(num_controls)) for _ in range(num_states))
    return PlanningProblem(transitions=transitions, costs=costs, discount=0.9, admissible=admissible)


def exact_counts(bundle, visits: int = 3) -> CountTensor:
    return CountTensor(np.rint(visits * bundle.cmc.transitions).astype(np.int64))


class TestPlanningProblem:
    """Validation of the discounted problem"""

    def test_goal_becomes_self_loop(self):
        transitions = np.full((1, 2, 2), 0.5)
        problem = PlanningProblem(
            transitions=transitions, costs=np.array([1.0, 0.0]), discount=0.9, admissible=((0,), (0,))
        )
        assert problem.goals == (1,)
        assert problem.transitions[0, 1].tolist() == [0.0, 1.0]
        # the caller's array is left alone
        assert transitions[0, 1].tolist() == [0.5, 0.5]

    @pytest.mark.parametrize("discount", [0.0, 1.0, 1.5])
    def test_rejects_discount(self, discount):
        with pytest.raises(ValueError, match="Discount"):
            PlanningProblem(
                transitions=np.ones((1, 2, 2)) / 2,
                costs=np.array([1.0, 0.0]),
                discount=discount,
                admissible=((0,), (0,)),
            )

    def test_requires_goal(self):
        with pytest.raises(ValueError, match="goal"):
            PlanningProblem(
                transitions=np.ones((1, 2, 2)) / 2,
                costs=np.array([1.0, 1.0]),
                discount=0.9,
                admissible=((0,), (0,)),
            )

    def test_requires_admissible_controls(self):
        with pytest.raises(ValueError, match="admissible"):
            PlanningProblem(
                transitions=np.ones((1, 2, 2)) / 2,
                costs=np.array([1.0, 0.0]),
                discount=0.9,
                admissible=((0,), ()),
            )


def test_self_loop_value():
    """Never leaving state 0 costs sum of 0.99^k = 100"""
    problem = stay_or_goal(0.5)
    J = policy_evaluation(problem, (1, 0))
    assert J[0] == pytest.approx(100.0, rel=1e-9)
    assert J[1] == 0.0


def test_closed_form_value():
    problem = stay_or_goal(0.5)
    plan = policy_iteration(problem)
    assert plan.policy[0] == 0
    assert plan.values[0] == pytest.approx(1.0 / (1.0 - 0.495), rel=1e-9)
    assert plan.values[1] == 0.0


def test_improvement_ties_go_to_lowest_control():
    transitions = np.zeros((3, 2, 2))
    transitions[:, 0, 1] = 1.0
    transitions[:, 1, 1] = 1.0
    problem = PlanningProblem(
        transitions=transitions, costs=np.array([1.0, 0.0]), discount=0.9, admissible=((1, 2), (0, 1, 2))
    )
    assert policy_improvement(problem, np.array([1.0, 0.0])) == (1, 0)


def test_improvement_rejects_non_finite_values():
    with pytest.raises(NumericError):
        policy_improvement(stay_or_goal(0.5), np.array([np.inf, 0.0]))


def test_initial_policy_must_be_admissible():
    transitions = np.zeros((2, 2, 2))
    transitions[:, :, 1] = 1.0
    problem = PlanningProblem(
        transitions=transitions, costs=np.array([1.0, 0.0]), discount=0.9, admissible=((1,), (0, 1))
    )
    with pytest.raises(ValueError, match="not admissible"):
        policy_iteration(problem, mu=(0, 0))


@pytest.mark.parametrize("seed", range(6))
def test_policy_iteration_matches_value_iteration(seed):
    problem = random_problem(seed)
    plan = policy_iteration(problem)
    J, mu = value_iteration(problem)
    assert np.allclose(plan.values, J, atol=1e-8)
    assert np.allclose(policy_evaluation(problem, mu), J, atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_policy_iteration_dominates_every_policy(seed):
    problem = random_problem(seed, num_states=4, num_controls=2)
    plan = policy_iteration(problem)
    for mu in itertools.product(range(2), repeat=4):
        assert np.all(plan.values <= policy_evaluation(problem, mu) + 1e-9)


def test_from_counts_uses_dirichlet_mean():
    F = CountTensor.zeros(3, 1)
    F.record(0, 0, 1)
    problem = PlanningProblem.from_counts(F, goals=[2])
    assert problem.costs.tolist() == [1.0, 1.0, 0.0]
    assert problem.transitions[0, 0, 1] == pytest.approx(1.05 / 1.15)
    assert problem.transitions[0, 1].sum() == pytest.approx(1.0)


def test_plan_record_is_one_based():
    plan = plan_exit(stay_or_goal(0.5), 0)
    record = plan.to_record()
    assert record["policy"] == {"1": 1, "2": 1}
    assert record["path"] == [1, 2]


def test_extract_path_skips_staying_put():
    problem = stay_or_goal(0.9)
    assert extract_path(problem, (0, 0), 0) == [0, 1]


class TestMazeExit:
    """Planning on exactly counted mazes recovers the breadth-first exit path"""

    def test_example4_exit(self):
        bundle = build_example(4)
        problem = PlanningProblem.from_counts(exact_counts(bundle), goals=[bundle.goal])
        plan = plan_exit(problem, bundle.entrance)
        assert [i + 1 for i in plan.path] == EXAMPLE4_PATH
        assert plan.path == shortest_path(bundle.cmc, bundle.entrance, bundle.goal)

    def test_modified_maze_exit(self):
        bundle = build_example(4, variant="modified-maze")
        problem = PlanningProblem.from_counts(exact_counts(bundle), goals=[22])
        plan = plan_exit(problem, bundle.entrance)
        assert [i + 1 for i in plan.path] == MODIFIED_MAZE_PATH
        assert plan.path == shortest_path(bundle.cmc, bundle.entrance, 22)

    def test_values_grow_with_distance(self):
        bundle = build_example(4)
        problem = PlanningProblem.from_counts(exact_counts(bundle), goals=[bundle.goal])
        plan = plan_exit(problem, bundle.entrance)
        along_path = [plan.values[i] for i in plan.path]
        assert along_path == sorted(along_path, reverse=True)
        assert along_path[-1] == pytest.approx(0.0, abs=1e-9)


if __name__ == "__main__":
    pytest.main([__file__])

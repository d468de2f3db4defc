"""
Discounted shortest-path planning on a learned CMC by exact policy iteration
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from .common.logger import reset_logger_config
from .core import CountTensor, EstimatorConfig, estimate_tensor
from .exceptions import NumericError

__all__ = [
    "PlanningProblem",
    "Plan",
    "policy_evaluation",
    "policy_improvement",
    "policy_iteration",
    "value_iteration",
    "extract_path",
    "plan_exit",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

DEFAULT_DISCOUNT = 0.99
RESIDUAL_TOLERANCE = 1e-9
CONDITION_LIMIT = 1e12
MAX_POLICY_ITERATIONS = 10_000
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    """J(i) = g(i) + discount * sum_j p_ij(u) J(j) over the admissible controls of each state.

    States with zero cost are goals: they terminate the path, so their
    transitions are replaced by self-loops and J(goal) = 0.
    """

    transitions: np.ndarray
    costs: np.ndarray
    discount: float
    admissible: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"Discount `{self.discount}` must lie in (0, 1)")
        costs = np.asarray(self.costs, dtype=np.float64)
        num_states = self.transitions.shape[1]
        if costs.shape != (num_states,):
            raise ValueError(f"Invalid cost vector shape `{costs.shape}`. Expected `({num_states},)`")
        if np.any(costs < 0.0):
            raise ValueError("Stage costs must be non-negative")
        if not np.any(costs == 0.0):
            raise ValueError("At least one state needs zero cost (a goal)")
        if len(self.admissible) != num_states or any(not a for a in self.admissible):
            raise ValueError("Every state needs a non-empty admissible control set")
        transitions = np.array(self.transitions, dtype=np.float64)
        for goal in np.flatnonzero(costs == 0.0):
            transitions[:, goal, :] = 0.0
            transitions[:, goal, goal] = 1.0
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "admissible", tuple(tuple(a) for a in self.admissible))

    @classmethod
    def from_counts(
        cls,
        F: CountTensor,
        goals: Iterable[int],
        cfg: Optional[EstimatorConfig] = None,
        discount: float = DEFAULT_DISCOUNT,
        admissible: Optional[Sequence[Sequence[int]]] = None,
    ) -> "PlanningProblem":
        """Unit cost everywhere except the goals, on the Dirichlet-mean estimate of ``F``"""
        costs = np.ones(F.num_states)
        for goal in goals:
            costs[goal] = 0.0
        if admissible is None:
            admissible = [tuple(range(F.num_controls))] * F.num_states
        return cls(
            transitions=estimate_tensor(F, cfg or EstimatorConfig()),
            costs=costs,
            discount=discount,
            admissible=tuple(tuple(a) for a in admissible),
        )

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def goals(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.costs == 0.0))

    def q_values(self, J: np.ndarray, i: int) -> np.ndarray:
        controls = list(self.admissible[i])
        return self.costs[i] + self.discount * self.transitions[controls, i, :] @ J


@dataclass
class Plan:
    policy: tuple[int, ...]
    values: np.ndarray
    path: list[int] = field(default_factory=list)
    iterations: int = 0

    def to_record(self) -> dict:
        """1-based states and controls"""
        return {
            "policy": {str(i + 1): u + 1 for i, u in enumerate(self.policy)},
            "values": {str(i + 1): float(v) for i, v in enumerate(self.values)},
            "path": [i + 1 for i in self.path],
        }


def policy_evaluation(problem: PlanningProblem, mu: Sequence[int]) -> np.ndarray:
    """Solve ``(I - discount * P_mu) J = g`` with a dense factorization"""
    n = problem.num_states
    if len(mu) != n:
        raise ValueError(f"Policy covers {len(mu)} states. Expected {n}")
    P_mu = problem.transitions[list(mu), np.arange(n), :]
    M = np.eye(n) - problem.discount * P_mu
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericError(f"Policy evaluation matrix is ill-conditioned (cond=`{cond:.3e}`)")
    try:
        J = scipy.linalg.solve(M, problem.costs)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"Policy evaluation failed: {e}") from e
    residual = float(np.max(np.abs(M @ J - problem.costs)))
    if residual >= RESIDUAL_TOLERANCE:
        raise NumericError(
            f"Policy evaluation residual `{residual:.3e}` above {RESIDUAL_TOLERANCE}"
        )
    return J


def _argmin_lowest(values: np.ndarray) -> int:
    best = values.min()
    return int(np.flatnonzero(values <= best + TIE_TOLERANCE * max(1.0, abs(best)))[0])


def policy_improvement(problem: PlanningProblem, J: np.ndarray) -> tuple[int, ...]:
    """Greedy policy w.r.t. ``J``; ties go to the lowest admissible control"""
    if not np.all(np.isfinite(J)):
        raise NumericError("Cannot improve a policy against a non-finite value vector")
    mu = []
    for i in range(problem.num_states):
        controls = problem.admissible[i]
        mu.append(controls[_argmin_lowest(problem.q_values(J, i))])
    return tuple(mu)


def policy_iteration(
    problem: PlanningProblem,
    mu: Optional[Sequence[int]] = None,
    max_iterations: int = MAX_POLICY_ITERATIONS,
) -> Plan:
    """Alternate evaluation and improvement until the policy repeats"""
    if mu is None:
        mu = tuple(a[0] for a in problem.admissible)
    mu = tuple(int(u) for u in mu)
    for i, u in enumerate(mu):
        if u not in problem.admissible[i]:
            raise ValueError(f"Initial control {u + 1} is not admissible in state {i + 1}")
    num_controls = problem.transitions.shape[0]
    cap = min(max_iterations, num_controls ** problem.num_states)

    J = policy_evaluation(problem, mu)
    for iteration in range(1, cap + 1):
        improved = policy_improvement(problem, J)
        if improved == mu:
            logger.info(
                f"[policy iteration] converged after {iteration} iterations, J(goal)=0 at states {[g + 1 for g in problem.goals]}"
            )
            return Plan(policy=mu, values=J, iterations=iteration)
        J_next = policy_evaluation(problem, improved)
        slack = RESIDUAL_TOLERANCE * max(1.0, float(np.max(np.abs(J))))
        if np.any(J_next > J + slack):
            raise NumericError(f"Policy iteration value increased at iteration {iteration}")
        logger.debug(
            f"[policy iteration] iteration {iteration}: {sum(a != b for a, b in zip(mu, improved))} states changed control"
        )
        mu, J = improved, J_next
    raise NumericError(f"Policy iteration did not converge within {cap} iterations")


def value_iteration(
    problem: PlanningProblem, sweeps: int = 10_000, tol: float = 1e-13
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Fixed point of the Bellman operator by repeated sweeps"""
    J = np.zeros(problem.num_states)
    for _ in range(sweeps):
        J_next = np.array([problem.q_values(J, i).min() for i in range(problem.num_states)])
        delta = float(np.max(np.abs(J_next - J)))
        J = J_next
        if delta < tol:
            break
    return J, policy_improvement(problem, J)


def extract_path(problem: PlanningProblem, mu: Sequence[int], start: int) -> list[int]:
    """Follow the most likely move under ``mu`` until a goal or ``|S|`` steps.

    Staying put does not advance a path, so the self-transition is skipped
    when picking the successor.
    """
    path = [start]
    goals = set(problem.goals)
    i = start
    for _ in range(problem.num_states):
        if i in goals:
            break
        row = problem.transitions[mu[i], i].copy()
        row[i] = -1.0
        i = int(np.argmax(row))
        path.append(i)
    if path[-1] not in goals:
        logger.warning(f"[plan] no goal reached from state {start + 1} within {problem.num_states} steps")
    return path


def plan_exit(problem: PlanningProblem, start: int) -> Plan:
    plan = policy_iteration(problem)
    plan.path = extract_path(problem, plan.policy, start)
    logger.info(f"[plan] path from state {start + 1}: {[i + 1 for i in plan.path]}")
    return plan

"""
Trajectory simulation, Monte-Carlo objective estimates and the tiny-instance exact DP oracle
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .common.logger import reset_logger_config
from .core import (
    Cmc,
    CountTensor,
    estimate_row,
    kl_divergence,
    missing_information_per_row,
    sample_next,
)
from .exceptions import CapacityError
from .measures import InfoMeasure
from .policies import FixedPolicy, Policy
from .utils import resolve_num_workers, trajectory_rng

__all__ = [
    "SimConfig",
    "PeriodRecord",
    "Trajectory",
    "ObjectiveEstimate",
    "DpResult",
    "run_trajectory",
    "run_many",
    "continue_exploration",
    "accumulate_tail",
    "evaluate_objective",
    "mean_missing_information_curve",
    "exact_dp_oracle",
    "best_open_loop_value",
    "policy_measure",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

DP_MAX_HORIZON = 8
DP_MAX_ROWS = 8
OPEN_LOOP_MAX_SEQUENCES = 10**6


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon: int = Field(ge=1)
    num_trajectories: int = Field(default=1, ge=1)
    master_seed: int = Field(default=0, ge=0)
    # None defers to CMC_EXPLORE_THREADS
    num_workers: Optional[int] = Field(default=None, ge=1)


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    state: int
    control: int
    h: float
    missing_information: float
    next_state: int


@dataclass
class Trajectory:
    records: list[PeriodRecord]
    counts: CountTensor
    initial_missing_information: float
    policy: str = ""
    index: int = 0

    @property
    def total_h(self) -> float:
        return math.fsum(r.h for r in self.records)

    @property
    def final_missing_information(self) -> float:
        if not self.records:
            return self.initial_missing_information
        return self.records[-1].missing_information

    def missing_information_curve(self) -> np.ndarray:
        """Missing information before period 1 followed by the value after each period"""
        return np.array(
            [self.initial_missing_information]
            + [r.missing_information for r in self.records]
        )

    def sampling_division(self) -> np.ndarray:
        """Samples per ``[state, control]`` row taken during this trajectory"""
        division = np.zeros((self.counts.num_states, self.counts.num_controls), dtype=np.int64)
        for r in self.records:
            division[r.state, r.control] += 1
        return division

    def first_entry_period(self, states: Iterable[int]) -> Optional[int]:
        """First period whose transition lands in ``states``"""
        targets = set(states)
        for r in self.records:
            if r.next_state in targets:
                return r.period
        return None

    def states(self) -> list[int]:
        return [r.state for r in self.records]

    def controls(self) -> list[int]:
        return [r.control for r in self.records]


@dataclass
class ObjectiveEstimate:
    mean: float
    stderr: float
    totals: list[float] = field(default_factory=list)

    @classmethod
    def from_totals(cls, totals: list[float]) -> "ObjectiveEstimate":
        n = len(totals)
        mean = math.fsum(totals) / n
        stderr = float(np.std(totals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=mean, stderr=stderr, totals=list(totals))


@dataclass(frozen=True)
class DpResult:
    value: float
    first_control: int


def policy_measure(policy: Policy, measure: Optional[InfoMeasure] = None) -> InfoMeasure:
    """The measure h accumulated along a trajectory: explicit, else the policy's own"""
    if measure is not None:
        return measure
    return getattr(policy, "measure", None) or InfoMeasure()


def _deterministic_run(truth: Cmc, policy: Policy) -> bool:
    return truth.is_deterministic and not policy.stochastic


def run_trajectory(
    truth: Cmc,
    policy: Policy,
    i0: int,
    F0: Optional[CountTensor],
    cfg: SimConfig,
    traj_index: int = 0,
    measure: Optional[InfoMeasure] = None,
    start_period: int = 1,
) -> Trajectory:
    """Simulate periods ``start_period..cfg.horizon`` from ``(i0, F0)``.

    h is evaluated against the counts before each period's transition; missing
    information is recorded after the count update.
    """
    measure = policy_measure(policy, measure)
    cfg_est = measure.cfg
    rng = trajectory_rng(cfg.master_seed, traj_index)
    F = CountTensor.like(truth) if F0 is None else F0.copy()
    if F.shape != truth.transitions.shape:
        raise ValueError(
            f"Count tensor shape `{F.shape}` does not match CMC shape `{truth.transitions.shape}`"
        )
    if not 0 <= i0 < truth.num_states:
        raise IndexError(f"Initial state `{i0}` out of range [0, {truth.num_states})")

    per_row = missing_information_per_row(truth, F, cfg_est)
    initial = float(per_row.sum())
    records = []
    i = i0
    for k in range(start_period, cfg.horizon + 1):
        u = policy.select(k, i, F, rng)
        h = measure(i, u, F)
        j = sample_next(truth, i, u, rng)
        F.record(u, i, j)
        if truth.available[i, u]:
            per_row[u, i] = kl_divergence(truth.transitions[u, i], estimate_row(F, u, i, cfg_est))
        mi = float(per_row.sum())
        records.append(PeriodRecord(k, i, u, h, mi, j))
        logger.debug(
            f"[trajectory={traj_index}] period {k}: state={i + 1} control={u + 1} h={h:.6f} missing_info={mi:.6f}"
        )
        i = j
    return Trajectory(
        records=records,
        counts=F,
        initial_missing_information=initial,
        policy=policy.name,
        index=traj_index,
    )


def continue_exploration(
    truth: Cmc,
    policy: Policy,
    i0: int,
    F: CountTensor,
    cfg: SimConfig,
    traj_index: int = 0,
    measure: Optional[InfoMeasure] = None,
) -> Trajectory:
    """Explore ``truth`` (possibly changed since ``F`` was learned) on top of existing counts"""
    logger.info(
        f"[trajectory={traj_index}] continuing exploration from state {i0 + 1} with {F.total} recorded transitions"
    )
    return run_trajectory(truth, policy, i0, F, cfg, traj_index, measure)


def run_many(
    truth: Cmc,
    policy: Policy,
    i0: int,
    F0: Optional[CountTensor],
    cfg: SimConfig,
    measure: Optional[InfoMeasure] = None,
) -> list[Trajectory]:
    """``cfg.num_trajectories`` independent trajectories, returned in index order"""
    n = cfg.num_trajectories
    if _deterministic_run(truth, policy):
        first = run_trajectory(truth, policy, i0, F0, cfg, 0, measure)
        return [first] + [
            Trajectory(list(first.records), first.counts.copy(), first.initial_missing_information, first.policy, t)
            for t in range(1, n)
        ]

    def _run(t: int) -> Trajectory:
        return run_trajectory(truth, policy, i0, F0, cfg, t, measure)

    workers = min(resolve_num_workers(cfg.num_workers), n)
    if workers == 1:
        return [_run(t) for t in range(n)]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="trajectory") as pool:
        return list(pool.map(_run, range(n)))


def evaluate_objective(
    truth: Cmc,
    policy: Policy,
    i0: int,
    F0: Optional[CountTensor],
    cfg: SimConfig,
    measure: Optional[InfoMeasure] = None,
) -> ObjectiveEstimate:
    """Monte-Carlo estimate of J = E[sum_k h(i_k, u_k, F_k)]"""
    trajectories = run_many(truth, policy, i0, F0, cfg, measure)
    estimate = ObjectiveEstimate.from_totals([t.total_h for t in trajectories])
    logger.debug(
        f"[policy={policy.name}] objective {estimate.mean:.6f} +/- {estimate.stderr:.6f} over {len(trajectories)} trajectories"
    )
    return estimate


def mean_missing_information_curve(trajectories: list[Trajectory]) -> np.ndarray:
    return np.mean([t.missing_information_curve() for t in trajectories], axis=0)


def accumulate_tail(
    truth: Cmc,
    policy: Policy,
    measure: InfoMeasure,
    k: int,
    i: int,
    F: CountTensor,
    horizon: int,
    rng: np.random.Generator,
) -> float:
    """Sum of h collected by ``policy`` over periods ``k..horizon``; ``F`` is consumed"""
    total = 0.0
    for period in range(k, horizon + 1):
        u = policy.select(period, i, F, rng)
        total += measure(i, u, F)
        j = sample_next(truth, i, u, rng)
        F.record(u, i, j)
        i = j
    return total


def exact_dp_oracle(
    truth: Cmc,
    measure: InfoMeasure,
    i0: int,
    N: int,
    F0: Optional[CountTensor] = None,
) -> DpResult:
    """Exact finite-horizon DP over every reachable (state, counts) pair.

    Uses the true transition probabilities. Only tiny instances are accepted.
    """
    if N > DP_MAX_HORIZON or truth.num_states * truth.num_controls > DP_MAX_ROWS:
        raise CapacityError(
            f"Exact DP supports N <= {DP_MAX_HORIZON} and |S||U| <= {DP_MAX_ROWS}, got N={N} and |S||U|={truth.num_states * truth.num_controls}"
        )
    memo: dict[tuple[int, int, bytes], tuple[float, int]] = {}

    def solve(k: int, i: int, F: CountTensor) -> tuple[float, int]:
        if k > N:
            return 0.0, -1
        key = (k, i, F.key())
        if key in memo:
            return memo[key]
        best_value, best_u = -math.inf, -1
        for u in truth.controls_at(i):
            value = measure(i, u, F)
            for j in truth.support(u, i):
                tail, _ = solve(k + 1, int(j), F.incremented(u, i, int(j)))
                value += truth.transitions[u, i, j] * tail
            if value > best_value:
                best_value, best_u = value, u
        memo[key] = (best_value, best_u)
        return best_value, best_u

    F = CountTensor.like(truth) if F0 is None else F0.copy()
    value, first = solve(1, i0, F)
    logger.info(f"[exact dp] N={N} value={value:.9f} first_control={first + 1} states_visited={len(memo)}")
    return DpResult(value=value, first_control=first)


def best_open_loop_value(
    truth: Cmc,
    measure: InfoMeasure,
    i0: int,
    N: int,
    F0: Optional[CountTensor] = None,
) -> tuple[float, tuple[int, ...]]:
    """Best total h over every control sequence of length N (deterministic CMCs only)"""
    if not truth.is_deterministic:
        raise ValueError("Open-loop enumeration equals the optimum only for deterministic dynamics")
    if truth.num_controls**N > OPEN_LOOP_MAX_SEQUENCES:
        raise CapacityError(
            f"{truth.num_controls}^{N} control sequences exceed the limit of {OPEN_LOOP_MAX_SEQUENCES}"
        )
    cfg = SimConfig(horizon=N)
    best_value, best_sequence = -math.inf, ()
    for sequence in itertools.product(range(truth.num_controls), repeat=N):
        i, legal = i0, True
        for u in sequence:
            if not truth.available[i, u]:
                legal = False
                break
            i = int(truth.support(u, i)[0])
        if not legal:
            continue
        policy = FixedPolicy(sequence, truth.available)
        value = run_trajectory(truth, policy, i0, F0, cfg, measure=measure).total_h
        if value > best_value:
            best_value, best_sequence = value, sequence
    return best_value, best_sequence

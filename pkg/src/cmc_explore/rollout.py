"""
One-step lookahead rollout over a base exploration policy
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .common.logger import reset_logger_config
from .core import Cmc, CountTensor
from .measures import InfoMeasure
from .policies import Policy, PolicyKind
from .simulator import SimConfig, Trajectory, accumulate_tail, policy_measure, run_trajectory
from .utils import resolve_num_workers

__all__ = [
    "RolloutConfig",
    "RolloutPolicy",
    "rollout_value",
    "rollout_q_values",
    "rollout_step",
    "run_rollout",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

STOCHASTIC_ROLLOUTS = 100
# q-values closer than this are ties
TIE_TOLERANCE = 1e-9


class RolloutConfig(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    base: Policy
    horizon: int = Field(ge=1)
    # Monte-Carlo continuations per successor; None picks 1 for deterministic runs, 100 otherwise
    rollouts_per_control: Optional[int] = Field(default=None, ge=1)
    master_seed: int = Field(default=0, ge=0)
    # lookahead over the base policy's U_k(i) instead of the full control set
    restrict_to_base: bool = False
    num_workers: Optional[int] = Field(default=None, ge=1)

    def rollouts_for(self, truth: Cmc) -> int:
        if self.rollouts_per_control is not None:
            return self.rollouts_per_control
        if truth.is_deterministic and not self.base.stochastic:
            return 1
        return STOCHASTIC_ROLLOUTS


def rollout_value(
    truth: Cmc,
    k: int,
    j: int,
    F: CountTensor,
    base: Policy,
    m: int,
    rng: np.random.Generator,
    horizon: int,
    measure: Optional[InfoMeasure] = None,
    num_workers: Optional[int] = None,
) -> float:
    """Mean h collected by ``base`` over periods ``k+1..horizon`` starting in ``(j, F)``"""
    if k >= horizon:
        return 0.0
    measure = policy_measure(base, measure)
    if truth.is_deterministic and not base.stochastic:
        return accumulate_tail(truth, base, measure, k + 1, j, F.copy(), horizon, rng)

    seeds = rng.integers(0, 2**63 - 1, size=m)

    def _tail(seed: int) -> float:
        return accumulate_tail(
            truth, base, measure, k + 1, j, F.copy(), horizon, np.random.default_rng(seed)
        )

    workers = min(resolve_num_workers(num_workers), m)
    if workers == 1:
        tails = [_tail(int(s)) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="rollout") as pool:
            tails = list(pool.map(_tail, (int(s) for s in seeds)))
    return math.fsum(tails) / m


def rollout_q_values(
    truth: Cmc,
    k: int,
    i: int,
    F: CountTensor,
    cfg: RolloutConfig,
    rng: np.random.Generator,
    measure: Optional[InfoMeasure] = None,
) -> dict[int, float]:
    """``h(i,u,F) + sum_j p_ij(u) J~_{k+1}(j, F + e_uij)`` for every candidate control, ascending"""
    base = cfg.base
    measure = policy_measure(base, measure)
    m = cfg.rollouts_for(truth)
    candidates = base.controls(k, i) if cfg.restrict_to_base else base.full_controls(i)
    q_values = {}
    for u in candidates:
        value = measure(i, u, F)
        row = truth.transitions[u, i]
        for j in truth.support(u, i):
            j = int(j)
            tail = rollout_value(
                truth,
                k,
                j,
                F.incremented(u, i, j),
                base,
                m,
                rng,
                cfg.horizon,
                measure,
                cfg.num_workers,
            )
            value += row[j] * tail
        logger.debug(f"[rollout] period {k}: state={i + 1} control={u + 1} q={value:.6f}")
        q_values[u] = value
    return q_values


def rollout_step(
    truth: Cmc,
    k: int,
    i: int,
    F: CountTensor,
    cfg: RolloutConfig,
    rng: np.random.Generator,
    measure: Optional[InfoMeasure] = None,
) -> int:
    """argmax of the rollout q-values; ties within ``TIE_TOLERANCE`` go to the lowest index"""
    candidates = cfg.base.controls(k, i) if cfg.restrict_to_base else cfg.base.full_controls(i)
    if len(candidates) == 1:
        return candidates[0]
    q_values = rollout_q_values(truth, k, i, F, cfg, rng, measure)
    best_u: Optional[int] = None
    for u, value in q_values.items():
        if best_u is None or value > q_values[best_u] + TIE_TOLERANCE:
            best_u = u
    return best_u


class RolloutPolicy(Policy):
    """Acts with ``rollout_step`` at every period"""

    kind = PolicyKind.ROLLOUT

    def __init__(
        self, truth: Cmc, cfg: RolloutConfig, measure: Optional[InfoMeasure] = None
    ) -> None:
        super().__init__(cfg.base.available)
        self.truth = truth
        self.cfg = cfg
        self.measure = policy_measure(cfg.base, measure)
        self.stochastic = cfg.base.stochastic
        logger.debug(
            f"[rollout base={cfg.base.name}] {cfg.rollouts_for(truth)} continuation(s) per successor"
        )

    def select(
        self, k: int, i: int, F: CountTensor, rng: Optional[np.random.Generator] = None
    ) -> int:
        if rng is None:
            rng = np.random.default_rng(self.cfg.master_seed)
        return rollout_step(self.truth, k, i, F, self.cfg, rng, self.measure)


def run_rollout(
    truth: Cmc,
    base: Policy,
    i0: int,
    F0: Optional[CountTensor],
    cfg: RolloutConfig,
    traj_index: int = 0,
    measure: Optional[InfoMeasure] = None,
) -> Trajectory:
    if cfg.base is not base:
        cfg = cfg.model_copy(update={"base": base})
    policy = RolloutPolicy(truth, cfg, measure)
    sim_cfg = SimConfig(horizon=cfg.horizon, master_seed=cfg.master_seed)
    trajectory = run_trajectory(truth, policy, i0, F0, sim_cfg, traj_index, policy.measure)
    logger.info(
        f"[rollout base={base.name}] trajectory {traj_index}: total h={trajectory.total_h:.6f} final missing info={trajectory.final_missing_information:.6f}"
    )
    return trajectory

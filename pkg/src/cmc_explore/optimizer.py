"""
Search in policy space for the control-set parameters r

Two searches share one candidate evaluator: exhaustive enumeration for small
spaces and the cross-entropy method with one binomial distribution per
parameter. Every candidate is scored by ``evaluate_objective`` with the same
master seed, so objectives are comparable across candidates and iterations
and a candidate is simulated at most once per search.

A binomial with an interior success probability keeps its spread, so CEM
alone settles near r* rather than on it. ``cem_optimize`` therefore finishes
with a block-coordinate ascent: each restriction entry's (state, control)
pair is re-chosen over its whole range with everything else fixed, then each
time constant, then all time constants are nudged together, until a full
sweep improves nothing.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .common.logger import reset_logger_config
from .core import Cmc, CountTensor
from .exceptions import CapacityError, ControlSetError
from .measures import InfoMeasure
from .policies import ControlSetParams, ParametricPolicy, ParamShape
from .simulator import ObjectiveEstimate, SimConfig, evaluate_objective
from .utils import resolve_num_workers

__all__ = [
    "ParamSpace",
    "CemConfig",
    "CemState",
    "CemTraceRow",
    "OptimizerResult",
    "CandidateEvaluator",
    "exhaustive_search",
    "cem_generate",
    "cem_update",
    "cem_optimize",
    "refine_search",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

EXHAUSTIVE_MAX_CANDIDATES = 10**6
# objective gains below this do not count as improvements
IMPROVEMENT_TOLERANCE = 1e-12

Vector = tuple[int, ...]


class ParamSpace(BaseModel):
    """Inclusive 1-based integer range for every component of ``r``"""

    model_config = ConfigDict(frozen=True)

    shape: ParamShape
    bounds: tuple[tuple[int, int], ...]

    @model_validator(mode="after")
    def _check_bounds(self) -> "ParamSpace":
        if len(self.bounds) != self.shape.size:
            raise ValueError(
                f"Parameter space has {len(self.bounds)} ranges. Expected {self.shape.size} for shape `{self.shape}`"
            )
        for index, (lower, upper) in enumerate(self.bounds):
            if lower < 1 or upper < lower:
                raise ValueError(
                    f"Invalid range `({lower}, {upper})` for parameter {index + 1}. Expected 1 <= lower <= upper"
                )
        return self

    @classmethod
    def for_shape(
        cls,
        shape: ParamShape,
        num_states: int,
        num_controls: int,
        horizon: int,
        state_range: Optional[tuple[int, int]] = None,
        control_range: Optional[tuple[int, int]] = None,
        time_range: Optional[tuple[int, int]] = None,
    ) -> "ParamSpace":
        ranges = {
            "state": state_range or (1, num_states),
            "control": control_range or (1, num_controls),
            "time": time_range or (1, horizon),
        }
        return cls(shape=shape, bounds=tuple(ranges[g] for g in shape.groups()))

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=np.int64)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=np.int64)

    @property
    def size(self) -> int:
        return math.prod(upper - lower + 1 for lower, upper in self.bounds)

    def enumerate(self) -> Iterable[Vector]:
        """Every vector in lexicographic order"""
        return itertools.product(*(range(lower, upper + 1) for lower, upper in self.bounds))

    @property
    def canonicalizable(self) -> bool:
        # sorting entries only stays in range when each group shares one range
        groups: dict[str, set[tuple[int, int]]] = {}
        for group, bound in zip(self.shape.groups(), self.bounds):
            groups.setdefault(group, set()).add(bound)
        return all(len(b) == 1 for b in groups.values())

    def canonicalize(self, vector: Sequence[int]) -> Vector:
        vector = tuple(int(v) for v in vector)
        if not self.canonicalizable:
            return vector
        return ControlSetParams.from_vector(vector, self.shape).canonical().to_vector(self.shape)


class CemConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    population: int = Field(default=100, ge=1)
    elite_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    initial_p: float = Field(default=0.5, ge=0.0, le=1.0)
    max_iterations: int = Field(default=50, ge=1)
    tolerance: float = Field(default=1e-3, gt=0.0)
    seed: int = Field(default=0, ge=0)
    # p <- smoothing * p_elite + (1 - smoothing) * p
    smoothing: float = Field(default=0.7, gt=0.0, le=1.0)
    # iterations without a better candidate before the search counts as converged
    patience: int = Field(default=10, ge=1)
    refine: bool = True
    # distinct best candidates the coordinate ascent starts from
    refine_starts: int = Field(default=2, ge=1)
    max_sweeps: int = Field(default=20, ge=1)

    @property
    def num_elites(self) -> int:
        return max(1, math.ceil(self.elite_fraction * self.population))


@dataclass(frozen=True)
class CemState:
    """Binomial(trials_i, p_i) over ``r_i - lower_i`` for every parameter"""

    lower: np.ndarray
    trials: np.ndarray
    p: np.ndarray
    population: int = 100
    elite_fraction: float = 0.1
    iteration: int = 0

    def __post_init__(self) -> None:
        if np.any((self.p < 0.0) | (self.p > 1.0)):
            raise ValueError(f"Binomial probabilities `{self.p}` must lie in [0, 1]")
        if np.any(self.trials < 0):
            raise ValueError(f"Binomial trial counts `{self.trials}` must be non-negative")

    @classmethod
    def initial(cls, space: ParamSpace, cfg: Optional[CemConfig] = None) -> "CemState":
        cfg = cfg or CemConfig()
        return cls(
            lower=space.lower,
            trials=space.upper - space.lower,
            p=np.full(space.shape.size, cfg.initial_p),
            population=cfg.population,
            elite_fraction=cfg.elite_fraction,
        )


@dataclass(frozen=True)
class CemTraceRow:
    iteration: int
    best_objective: float
    p: tuple[float, ...]


@dataclass
class OptimizerResult:
    r: Vector
    objective: ObjectiveEstimate
    iterations: int
    method: str
    trace: list[CemTraceRow] = field(default_factory=list)
    evaluations: int = 0
    refine_sweeps: int = 0

    def to_record(self) -> dict:
        return {
            "r": list(self.r),
            "objective_mean": self.objective.mean,
            "objective_stderr": self.objective.stderr,
            "iterations": self.iterations,
            "refine_sweeps": self.refine_sweeps,
            "method": self.method,
        }


def _policy_key(params: ControlSetParams, available: np.ndarray) -> tuple:
    """Entries that actually restrict something; vectors sharing a key act identically"""
    horizon_of: dict[tuple[int, int], int] = {}
    for e in params.entries:
        if e.time_constant <= 1 or not available[e.state, e.control]:
            continue
        pair = (e.state, e.control)
        horizon_of[pair] = max(horizon_of.get(pair, 1), e.time_constant)
    return tuple(sorted(horizon_of.items()))


class CandidateEvaluator:
    """Scores parameter vectors with common random numbers and memoizes by effective policy"""

    def __init__(
        self,
        truth: Cmc,
        space: ParamSpace,
        measure: InfoMeasure,
        i0: int,
        cfg: SimConfig,
        F0: Optional[CountTensor] = None,
    ) -> None:
        self.truth = truth
        self.space = space
        self.measure = measure
        self.i0 = i0
        self.F0 = F0
        self.workers = resolve_num_workers(cfg.num_workers)
        # candidates already run concurrently
        self.sim_cfg = cfg.model_copy(update={"num_workers": 1}) if self.workers > 1 else cfg
        self.cache: dict[tuple, ObjectiveEstimate] = {}

    @property
    def evaluations(self) -> int:
        return len(self.cache)

    def _prepare(self, vector: Vector) -> tuple[Optional[tuple], Optional[ParametricPolicy]]:
        try:
            params = ControlSetParams.from_vector(vector, self.space.shape)
            policy = ParametricPolicy.for_cmc(self.truth, params, self.measure)
        except ControlSetError as e:
            logger.debug(f"[candidate r={vector}] skipped: {e}")
            return None, None
        return _policy_key(params, self.truth.available), policy

    def key(self, vector: Vector) -> Optional[tuple]:
        """Effective-policy key of ``vector``; None when it is invalid"""
        return self._prepare(vector)[0]

    def _score(self, policy: ParametricPolicy) -> ObjectiveEstimate:
        return evaluate_objective(
            self.truth, policy, self.i0, self.F0, self.sim_cfg, self.measure
        )

    def evaluate(self, vectors: Sequence[Vector]) -> list[ObjectiveEstimate]:
        """Objective of every vector, in input order; invalid vectors score ``-inf``"""
        prepared = [self._prepare(v) for v in vectors]
        pending: dict[tuple, ParametricPolicy] = {}
        for key, policy in prepared:
            if key is not None and key not in self.cache and key not in pending:
                pending[key] = policy
        if pending:
            keys = list(pending)
            workers = min(self.workers, len(keys))
            if workers == 1:
                scores = [self._score(pending[k]) for k in keys]
            else:
                with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="candidate") as pool:
                    scores = list(pool.map(self._score, (pending[k] for k in keys)))
            self.cache.update(zip(keys, scores))
        invalid = ObjectiveEstimate(mean=-math.inf, stderr=0.0)
        return [invalid if key is None else self.cache[key] for key, _ in prepared]


def exhaustive_search(
    truth: Cmc,
    space: ParamSpace,
    measure: InfoMeasure,
    i0: int,
    cfg: SimConfig,
    F0: Optional[CountTensor] = None,
    max_candidates: int = EXHAUSTIVE_MAX_CANDIDATES,
) -> OptimizerResult:
    """Best r over the whole space; ties keep the first vector in lexicographic order"""
    size = space.size
    if size > max_candidates:
        raise CapacityError(
            f"Parameter space holds {size} candidates, above the exhaustive limit of {max_candidates}. Use the cross-entropy method instead"
        )
    logger.info(f"[exhaustive] evaluating {size} candidates at horizon {cfg.horizon}")
    evaluator = CandidateEvaluator(truth, space, measure, i0, cfg, F0)
    vectors = list(space.enumerate())
    scores = evaluator.evaluate(vectors)
    best_index = 0
    for index, score in enumerate(scores):
        if score.mean > scores[best_index].mean:
            best_index = index
    best = scores[best_index]
    if math.isinf(best.mean):
        raise ControlSetError("Every candidate in the parameter space empties a control set")
    logger.info(
        f"[exhaustive] best r={vectors[best_index]} objective={best.mean:.6f} +/- {best.stderr:.6f} ({evaluator.evaluations} distinct policies)"
    )
    return OptimizerResult(
        r=vectors[best_index],
        objective=best,
        iterations=1,
        method="exhaustive",
        evaluations=evaluator.evaluations,
    )


def cem_generate(
    state: CemState, space: ParamSpace, M: int, rng: np.random.Generator
) -> list[Vector]:
    """M candidates: ``lower + Binomial(trials, p)`` per component, clamped to the range"""
    draws = rng.binomial(state.trials, state.p, size=(M, len(state.p)))
    candidates = np.clip(state.lower + draws, space.lower, space.upper)
    return [tuple(int(v) for v in row) for row in candidates]


def cem_update(state: CemState, elites: Sequence[Sequence[int]]) -> CemState:
    """``p_i = mean(elite r_i - lower_i) / trials_i``; single-value ranges keep ``p_i``"""
    if not elites:
        raise ValueError("CEM update needs at least one elite candidate")
    elites = np.asarray(elites, dtype=np.float64)
    mean_offset = elites.mean(axis=0) - state.lower
    p = state.p.copy()
    spread = state.trials > 0
    p[spread] = np.clip(mean_offset[spread] / state.trials[spread], 0.0, 1.0)
    return CemState(
        lower=state.lower,
        trials=state.trials,
        p=p,
        population=state.population,
        elite_fraction=state.elite_fraction,
        iteration=state.iteration + 1,
    )


def _coordinate_blocks(shape: ParamShape) -> list[tuple[tuple[int, ...], bool]]:
    """``(indices, nudge)`` blocks: every entry's (state, control) pair and every
    time constant over its full range, then all time constants moved by -1/0/+1 together
    """
    n = shape.num_entries
    times = tuple(range(2 * n, shape.size))
    blocks = [((e, n + e), False) for e in range(n)]
    blocks += [((t,), False) for t in times]
    if len(times) > 1:
        blocks.append((times, True))
    return blocks


def _block_candidates(
    space: ParamSpace, vector: Vector, block: tuple[int, ...], nudge: bool
) -> list[Vector]:
    if nudge:
        choices = [(vector[b] - 1, vector[b], vector[b] + 1) for b in block]
    else:
        choices = [range(space.bounds[b][0], space.bounds[b][1] + 1) for b in block]
    candidates = []
    for values in itertools.product(*choices):
        candidate = list(vector)
        for b, value in zip(block, values):
            candidate[b] = value
        if all(space.bounds[b][0] <= candidate[b] <= space.bounds[b][1] for b in block):
            candidates.append(tuple(candidate))
    return candidates


def refine_search(
    evaluator: CandidateEvaluator,
    start: Sequence[int],
    max_sweeps: int = 20,
) -> tuple[Vector, ObjectiveEstimate, int]:
    """Block-coordinate ascent from ``start`` over the evaluator's space.

    Each block is re-chosen with the other components fixed and the first
    best value wins ties. The joint -1/0/+1 move of the time constants shifts
    every restriction window at once, which single-coordinate moves cannot do
    without passing through ties. Stops after a sweep without strict
    improvement. Returns the canonical best vector, its objective and the
    number of sweeps run.
    """
    space = evaluator.space
    best = tuple(int(v) for v in start)
    best_score = evaluator.evaluate([best])[0]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        improved = False
        for block, nudge in _coordinate_blocks(space.shape):
            candidates = _block_candidates(space, best, block, nudge)
            for candidate, score in zip(candidates, evaluator.evaluate(candidates)):
                if score.mean > best_score.mean + IMPROVEMENT_TOLERANCE:
                    best, best_score, improved = candidate, score, True
        logger.info(
            f"[refine sweep={sweeps}] objective={best_score.mean:.6f} r={best} distinct policies={evaluator.evaluations}"
        )
        if not improved:
            break
    return space.canonicalize(best), best_score, sweeps


def _refine_starts(
    evaluator: CandidateEvaluator, scored: dict[Vector, float], count: int
) -> list[Vector]:
    """Best ``count`` scored vectors with pairwise different effective policies"""
    starts: list[Vector] = []
    seen: set[tuple] = set()
    for vector in sorted(scored, key=lambda v: -scored[v]):
        key = evaluator.key(vector)
        if key is None or key in seen or math.isinf(scored[vector]):
            continue
        seen.add(key)
        starts.append(vector)
        if len(starts) == count:
            break
    return starts


def cem_optimize(
    truth: Cmc,
    space: ParamSpace,
    measure: InfoMeasure,
    i0: int,
    cfg: SimConfig,
    cem: Optional[CemConfig] = None,
    F0: Optional[CountTensor] = None,
) -> OptimizerResult:
    """Generate, evaluate, select and update until every ``|dp_i| < tolerance``
    or the best objective stalls for ``patience`` iterations, then refine.

    Returns the best candidate found together with the per-iteration trace of
    the best objective and the (smoothed) binomial probabilities.
    """
    cem = cem or CemConfig()
    rng = np.random.default_rng(cem.seed)
    evaluator = CandidateEvaluator(truth, space, measure, i0, cfg, F0)
    state = CemState.initial(space, cem)
    best_r: Optional[Vector] = None
    best = ObjectiveEstimate(mean=-math.inf, stderr=0.0)
    scored: dict[Vector, float] = {}
    trace: list[CemTraceRow] = []
    stale = 0

    for iteration in range(1, cem.max_iterations + 1):
        candidates = [space.canonicalize(c) for c in cem_generate(state, space, cem.population, rng)]
        scores = evaluator.evaluate(candidates)
        improved = False
        for candidate, score in zip(candidates, scores):
            scored.setdefault(candidate, score.mean)
            if score.mean > best.mean + IMPROVEMENT_TOLERANCE:
                best_r, best, improved = candidate, score, True
        stale = 0 if improved else stale + 1
        # stable sort keeps generation order among equal scores
        order = sorted(range(len(candidates)), key=lambda c: -scores[c].mean)
        elites = [candidates[c] for c in order[: cem.num_elites]]
        updated = cem_update(state, elites)
        if cem.smoothing < 1.0:
            updated = replace(updated, p=cem.smoothing * updated.p + (1.0 - cem.smoothing) * state.p)
        delta = float(np.max(np.abs(updated.p - state.p))) if len(state.p) else 0.0
        state = updated
        trace.append(CemTraceRow(iteration, best.mean, tuple(float(p) for p in state.p)))
        logger.info(
            f"[cem iteration={iteration}] best objective={best.mean:.6f} r={best_r} max|dp|={delta:.6f} distinct policies={evaluator.evaluations}"
        )
        if delta < cem.tolerance:
            break
        if stale >= cem.patience:
            logger.info(f"[cem] best objective unchanged for {stale} iterations")
            break
    else:
        logger.warning(f"[cem] no convergence within {cem.max_iterations} iterations")

    if best_r is None:
        raise ControlSetError("Every CEM candidate emptied a control set")

    sweeps = 0
    if cem.refine:
        for start in _refine_starts(evaluator, scored, cem.refine_starts):
            refined, score, used = refine_search(evaluator, start, cem.max_sweeps)
            sweeps += used
            if score.mean > best.mean + IMPROVEMENT_TOLERANCE:
                best_r, best = refined, score
        logger.info(
            f"[cem] refined to r={best_r} objective={best.mean:.6f} after {sweeps} sweeps ({evaluator.evaluations} distinct policies)"
        )
    return OptimizerResult(
        r=best_r,
        objective=best,
        iterations=len(trace),
        method="cem",
        trace=trace,
        evaluations=evaluator.evaluations,
        refine_sweeps=sweeps,
    )

"""
Ground-truth controllable Markov chains, count tensors and the Dirichlet-mean estimate

Indices are 0-based everywhere inside the package. Tensors are indexed
``(u, i, j)``: control, source state, target state.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import rel_entr

from .common.logger import reset_logger_config

__all__ = [
    "Cmc",
    "CountTensor",
    "EstimatorConfig",
    "estimate_row",
    "estimate_tensor",
    "kl_divergence",
    "missing_information",
    "missing_information_per_row",
    "sample_next",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

ROW_SUM_TOLERANCE = 1e-12
LN2 = math.log(2.0)


class EstimatorConfig(BaseModel):
    """Dirichlet prior pseudo-count added to every outcome of every row"""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.05, gt=0.0)


@dataclass(frozen=True, eq=False)
class Cmc:
    """Controllable Markov chain with transition tensor ``transitions[u, i, j]``.

    ``available[i, u]`` marks the controls that may be applied in state ``i``.
    Rows of unavailable controls are still stochastic (callers store self-loops)
    but are never chosen by a policy and are left out of missing information.
    """

    transitions: np.ndarray
    available: Optional[np.ndarray] = None
    labels: tuple[str, ...] = field(default=())
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        transitions = np.array(self.transitions, dtype=np.float64)
        if transitions.ndim != 3 or transitions.shape[1] != transitions.shape[2]:
            raise ValueError(
                f"Invalid transition tensor shape `{transitions.shape}`. Expected `(controls, states, states)`"
            )
        if transitions.shape[0] < 1 or transitions.shape[1] < 1:
            raise ValueError("A CMC needs at least one state and one control")
        if np.any(transitions < 0.0):
            u, i, j = np.argwhere(transitions < 0.0)[0]
            raise ValueError(f"Negative transition probability at (u={u}, i={i}, j={j})")
        row_sums = transitions.sum(axis=2)
        bad = np.argwhere(np.abs(row_sums - 1.0) > ROW_SUM_TOLERANCE)
        if len(bad):
            u, i = bad[0]
            raise ValueError(
                f"Row (u={u}, i={i}) sums to `{row_sums[u, i]!r}`. Expected 1 within {ROW_SUM_TOLERANCE}"
            )
        num_controls, num_states = transitions.shape[0], transitions.shape[1]
        if self.available is None:
            available = np.ones((num_states, num_controls), dtype=bool)
        else:
            available = np.array(self.available, dtype=bool)
            if available.shape != (num_states, num_controls):
                raise ValueError(
                    f"Invalid availability mask shape `{available.shape}`. Expected `{(num_states, num_controls)}`"
                )
            empty = np.flatnonzero(~available.any(axis=1))
            if len(empty):
                raise ValueError(f"State {empty[0]} has no available control")
        labels = tuple(self.labels) or tuple(str(i + 1) for i in range(num_states))
        if len(labels) != num_states:
            raise ValueError(f"Expected {num_states} state labels, got {len(labels)}")
        cumulative = np.cumsum(transitions, axis=2)
        cumulative.setflags(write=False)
        transitions.setflags(write=False)
        available.setflags(write=False)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "available", available)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cumulative", cumulative)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_controls(self) -> int:
        return self.transitions.shape[0]

    @property
    def is_deterministic(self) -> bool:
        """Every available row is a point mass"""
        point_mass = np.isclose(self.transitions.max(axis=2), 1.0, rtol=0.0, atol=1e-12)
        return bool(np.all(point_mass.T[self.available]))

    def controls_at(self, i: int) -> tuple[int, ...]:
        return tuple(int(u) for u in np.flatnonzero(self.available[i]))

    def row(self, u: int, i: int) -> np.ndarray:
        self.check_indices(u, i)
        return self.transitions[u, i]

    def support(self, u: int, i: int) -> np.ndarray:
        return np.flatnonzero(self.row(u, i) > 0.0)

    def check_indices(self, u: int, i: int) -> None:
        if not 0 <= u < self.num_controls:
            raise IndexError(f"Control index `{u}` out of range [0, {self.num_controls})")
        if not 0 <= i < self.num_states:
            raise IndexError(f"State index `{i}` out of range [0, {self.num_states})")


class CountTensor:
    """Visit counts ``F[u, i, j]`` accumulated by one trajectory"""

    def __init__(self, counts: np.ndarray) -> None:
        counts = np.array(counts, dtype=np.int64)
        if counts.ndim != 3 or counts.shape[1] != counts.shape[2]:
            raise ValueError(
                f"Invalid count tensor shape `{counts.shape}`. Expected `(controls, states, states)`"
            )
        if np.any(counts < 0):
            raise ValueError("Counts must be non-negative")
        self.counts = counts

    @classmethod
    def zeros(cls, num_states: int, num_controls: int) -> "CountTensor":
        return cls(np.zeros((num_controls, num_states, num_states), dtype=np.int64))

    @classmethod
    def like(cls, cmc: Cmc) -> "CountTensor":
        return cls.zeros(cmc.num_states, cmc.num_controls)

    @property
    def num_states(self) -> int:
        return self.counts.shape[1]

    @property
    def num_controls(self) -> int:
        return self.counts.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts.shape

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def record(self, u: int, i: int, j: int) -> None:
        self.counts[u, i, j] += 1

    def row(self, u: int, i: int) -> np.ndarray:
        return self.counts[u, i]

    def copy(self) -> "CountTensor":
        return CountTensor(self.counts.copy())

    def incremented(self, u: int, i: int, j: int) -> "CountTensor":
        """Copy with one extra ``i -> j`` transition under ``u``"""
        other = self.copy()
        other.record(u, i, j)
        return other

    def key(self) -> bytes:
        return self.counts.tobytes()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CountTensor) and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"CountTensor(controls={self.num_controls}, states={self.num_states}, total={self.total})"


def _check_shape(truth: Cmc, F: CountTensor) -> None:
    if F.shape != truth.transitions.shape:
        raise ValueError(
            f"Count tensor shape `{F.shape}` does not match CMC shape `{truth.transitions.shape}`"
        )


def estimate_row(F: CountTensor, u: int, i: int, cfg: EstimatorConfig) -> np.ndarray:
    """Dirichlet-mean estimate of row ``p_i.(u)``: ``(F_uij + alpha) / sum_j' (F_uij' + alpha)``"""
    if not 0 <= u < F.num_controls:
        raise IndexError(f"Control index `{u}` out of range [0, {F.num_controls})")
    if not 0 <= i < F.num_states:
        raise IndexError(f"State index `{i}` out of range [0, {F.num_states})")
    a = F.counts[u, i] + cfg.alpha
    return a / a.sum()


def estimate_tensor(F: CountTensor, cfg: EstimatorConfig) -> np.ndarray:
    a = F.counts + cfg.alpha
    return a / a.sum(axis=2, keepdims=True)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in bits; ``inf`` when p puts mass where q has none"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"Distribution shapes differ: `{p.shape}` vs `{q.shape}`")
    value = float(np.sum(rel_entr(p, q))) / LN2
    if math.isinf(value):
        return math.inf
    return max(0.0, value)


def missing_information_per_row(
    truth: Cmc, F: CountTensor, cfg: EstimatorConfig
) -> np.ndarray:
    """``KL(truth_row || estimate_row)`` in bits for every ``(u, i)``; 0 for unavailable rows"""
    _check_shape(truth, F)
    per_row = rel_entr(truth.transitions, estimate_tensor(F, cfg)).sum(axis=2) / LN2
    return np.where(truth.available.T, np.maximum(per_row, 0.0), 0.0)


def missing_information(truth: Cmc, F: CountTensor, cfg: EstimatorConfig) -> float:
    """Summed KL divergence between true and estimated rows, in bits"""
    return float(missing_information_per_row(truth, F, cfg).sum())


def sample_next(truth: Cmc, i: int, u: int, rng: np.random.Generator) -> int:
    """Draw a successor ``j ~ p_i.(u)``"""
    truth.check_indices(u, i)
    # inverse CDF; the clamp guards a last cumulative entry a hair below 1
    j = int(np.searchsorted(truth.cumulative[u, i], rng.random(), side="right"))
    return min(j, truth.num_states - 1)

"""
Information measures h(i, u, F) for informative exploration
"""

import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import rel_entr

from .core import LN2, CountTensor, EstimatorConfig

__all__ = ["MeasureKind", "InfoMeasure", "pig", "pig_controls", "pig_from_pseudo_counts"]

PIG_CACHE_SIZE = 1 << 18


class MeasureKind(str, Enum):
    PIG = "pig"


def pig_from_pseudo_counts(a: np.ndarray) -> np.ndarray:
    """Predicted information gain in bits for each row of pseudo-counts ``a = F_ui. + alpha``.

    For every possible outcome ``j*`` the row estimate is recomputed with one
    extra ``i -> j*`` transition, and its KL divergence from the current
    estimate is weighted by the current probability of ``j*``.
    """
    total = a.sum(axis=1, keepdims=True)
    current = a / total
    # updated[c, j*, :] is the estimate after one more i -> j* transition
    updated = (a[:, None, :] + np.eye(a.shape[1])) / (total[:, :, None] + 1.0)
    kl = rel_entr(updated, current[:, None, :]).sum(axis=2) / LN2
    return np.maximum((current * kl).sum(axis=1), 0.0)


def _row_key(row: np.ndarray) -> bytes:
    # PIG is symmetric in the outcomes; sorted rows give bit-identical values for equal count multisets
    return np.sort(row).tobytes()


@functools.lru_cache(maxsize=PIG_CACHE_SIZE)
def _pig_of_row(row: bytes, alpha: float) -> float:
    # a row's value depends on its counts only, and rows repeat across trajectories
    a = np.frombuffer(row, dtype=np.int64) + alpha
    return float(pig_from_pseudo_counts(a[None, :])[0])


def pig_controls(
    i: int, controls: Sequence[int], F: CountTensor, cfg: EstimatorConfig
) -> np.ndarray:
    """PIG of every control in ``controls`` at state ``i``; ``F`` is only read"""
    counts = F.counts
    return np.array([_pig_of_row(_row_key(counts[u, i]), cfg.alpha) for u in controls])


def pig(i: int, u: int, F: CountTensor, cfg: EstimatorConfig) -> float:
    if not 0 <= u < F.num_controls:
        raise IndexError(f"Control index `{u}` out of range [0, {F.num_controls})")
    if not 0 <= i < F.num_states:
        raise IndexError(f"State index `{i}` out of range [0, {F.num_states})")
    return _pig_of_row(_row_key(F.counts[u, i]), cfg.alpha)


@dataclass(frozen=True)
class InfoMeasure:
    """h(i, u, F): reads counts only, never the true CMC"""

    kind: MeasureKind = MeasureKind.PIG
    cfg: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __call__(self, i: int, u: int, F: CountTensor) -> float:
        if self.kind is MeasureKind.PIG:
            return pig(i, u, F, self.cfg)
        raise ValueError(f"Unsupported information measure `{self.kind}`")

    def evaluate(self, i: int, controls: Sequence[int], F: CountTensor) -> np.ndarray:
        if self.kind is MeasureKind.PIG:
            return pig_controls(i, controls, F, self.cfg)
        raise ValueError(f"Unsupported information measure `{self.kind}`")

"""
Time-varying control sets and the exploration policy family

Periods are 1-based (k = 1..N). A restriction entry removes its control from
its state's control set while ``k < time_constant``.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .common.logger import reset_logger_config
from .core import Cmc, CountTensor
from .exceptions import ControlSetError
from .measures import InfoMeasure

__all__ = [
    "RestrictionEntry",
    "ParamShape",
    "ControlSetParams",
    "PolicyKind",
    "Policy",
    "ParametricPolicy",
    "GreedyPolicy",
    "RandomPolicy",
    "FixedPolicy",
    "control_set",
    "initial_control_sets",
    "select_control",
    "greedy_choice",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)


class RestrictionEntry(BaseModel):
    """Control ``control`` is withheld in state ``state`` until period ``time_constant``"""

    model_config = ConfigDict(frozen=True)

    state: int = Field(ge=0)
    control: int = Field(ge=0)
    time_constant: int = Field(ge=1)


class ParamShape(BaseModel):
    """Layout of a flat parameter vector ``r``.

    ``r = (states..., controls..., time constants...)`` with one time constant
    per entry, or a single one shared by every entry.
    """

    model_config = ConfigDict(frozen=True)

    num_entries: int = Field(ge=1)
    shared_time_constant: bool = False

    @property
    def num_time_constants(self) -> int:
        return 1 if self.shared_time_constant else self.num_entries

    @property
    def size(self) -> int:
        return 2 * self.num_entries + self.num_time_constants

    def groups(self) -> list[str]:
        n = self.num_entries
        return ["state"] * n + ["control"] * n + ["time"] * self.num_time_constants


@dataclass(frozen=True)
class ControlSetParams:
    entries: tuple[RestrictionEntry, ...]

    @classmethod
    def from_vector(cls, vector: Sequence[int], shape: ParamShape) -> "ControlSetParams":
        """Decode a flat 1-based parameter vector (the ``r`` searched by the optimizer)"""
        values = [int(v) for v in vector]
        if len(values) != shape.size:
            raise ControlSetError(
                f"Parameter vector `{tuple(values)}` has {len(values)} components. Expected {shape.size}"
            )
        if any(v < 1 for v in values):
            raise ControlSetError(
                f"Parameter vector `{tuple(values)}` must contain 1-based values"
            )
        n = shape.num_entries
        states, controls, times = values[:n], values[n : 2 * n], values[2 * n :]
        if shape.shared_time_constant:
            times = times * n
        return cls(
            entries=tuple(
                RestrictionEntry(state=s - 1, control=u - 1, time_constant=t)
                for s, u, t in zip(states, controls, times)
            )
        )

    def to_vector(self, shape: ParamShape) -> tuple[int, ...]:
        if len(self.entries) != shape.num_entries:
            raise ControlSetError(
                f"Cannot encode {len(self.entries)} entries with shape `{shape}`"
            )
        states = [e.state + 1 for e in self.entries]
        controls = [e.control + 1 for e in self.entries]
        times = [e.time_constant for e in self.entries]
        if shape.shared_time_constant:
            times = times[:1]
        return tuple(states + controls + times)

    def canonical(self) -> "ControlSetParams":
        """Entries are unordered; sort them so permuted vectors compare equal"""
        return ControlSetParams(
            entries=tuple(
                sorted(self.entries, key=lambda e: (e.state, e.control, e.time_constant))
            )
        )

    @property
    def max_time_constant(self) -> int:
        return max((e.time_constant for e in self.entries), default=1)

    def validate_for(
        self, available: np.ndarray, transitions: Optional[np.ndarray] = None
    ) -> None:
        """Raise ControlSetError when an entry is out of range or empties a control set.

        With ``transitions`` given, an entry whose row never leaves its state is
        rejected too: restrictions only withhold transitions ``i -> j`` with ``j != i``.
        """
        num_states, num_controls = available.shape
        for e in self.entries:
            if e.state >= num_states or e.control >= num_controls:
                raise ControlSetError(
                    f"Restriction `(state={e.state + 1}, control={e.control + 1})` out of range for {num_states} states and {num_controls} controls"
                )
            if transitions is not None and transitions[e.control, e.state, e.state] >= 1.0:
                raise ControlSetError(
                    f"Restriction `(state={e.state + 1}, control={e.control + 1})` withholds a transition from state {e.state + 1} to itself"
                )
        for i in range(num_states):
            full = tuple(int(u) for u in np.flatnonzero(available[i]))
            control_set(1, i, self, full)


def control_set(
    k: int, i: int, r: ControlSetParams, full: Sequence[int]
) -> tuple[int, ...]:
    """U_k(i, r): the full set minus the controls restricted for ``i`` while ``k < t``"""
    if k < 1:
        raise ValueError(f"Periods are 1-based, got `k={k}`")
    restricted = {e.control for e in r.entries if e.state == i and k < e.time_constant}
    if not restricted:
        return tuple(full)
    allowed = tuple(u for u in full if u not in restricted)
    if not allowed:
        raise ControlSetError(
            f"Restrictions `{sorted(u + 1 for u in restricted)}` empty the control set of state {i + 1} at period {k}"
        )
    return allowed


def initial_control_sets(
    r: Optional[ControlSetParams], available: np.ndarray
) -> list[tuple[int, ...]]:
    """U_1(i, r) for every state: the most restrictive sets, used by the planner"""
    sets = []
    for i in range(available.shape[0]):
        full = tuple(int(u) for u in np.flatnonzero(available[i]))
        sets.append(full if r is None else control_set(1, i, r, full))
    return sets


def greedy_choice(
    measure: InfoMeasure, i: int, controls: Sequence[int], F: CountTensor
) -> int:
    """argmax of the measure over ``controls`` (ascending); ties go to the lowest index"""
    if len(controls) == 1:
        return controls[0]
    values = measure.evaluate(i, controls, F)
    return int(controls[int(np.argmax(values))])


class PolicyKind(str, Enum):
    PARAMETRIC = "parametric"
    GREEDY = "greedy"
    RANDOM = "random"
    FIXED = "fixed"
    ROLLOUT = "rollout"


class Policy:
    """Maps (period, state, counts, stream) to a legal control"""

    kind: PolicyKind
    # True when the choice depends on the random stream
    stochastic = False

    def __init__(self, available: np.ndarray) -> None:
        available = np.array(available, dtype=bool)
        self.available = available
        self._full = [
            tuple(int(u) for u in np.flatnonzero(available[i]))
            for i in range(available.shape[0])
        ]

    @classmethod
    def for_cmc(cls, cmc: Cmc, *args, **kwargs) -> "Policy":
        return cls(*args, available=cmc.available, **kwargs)

    @property
    def name(self) -> str:
        return self.kind.value

    def full_controls(self, i: int) -> tuple[int, ...]:
        return self._full[i]

    def controls(self, k: int, i: int) -> tuple[int, ...]:
        return self._full[i]

    def select(
        self, k: int, i: int, F: CountTensor, rng: Optional[np.random.Generator] = None
    ) -> int:
        raise NotImplementedError


class ParametricPolicy(Policy):
    """Greedy measure maximization over the time-varying set U_k(i, r)"""

    kind = PolicyKind.PARAMETRIC

    def __init__(
        self,
        params: ControlSetParams,
        measure: InfoMeasure,
        available: np.ndarray,
        transitions: Optional[np.ndarray] = None,
    ) -> None:
        super().__init__(available)
        params.validate_for(self.available, transitions)
        self.params = params
        self.measure = measure

    @classmethod
    def for_cmc(
        cls, cmc: Cmc, params: ControlSetParams, measure: InfoMeasure
    ) -> "ParametricPolicy":
        """Policy on ``cmc`` that also rejects restrictions of self-transitions"""
        return cls(params, measure, cmc.available, cmc.transitions)

    def controls(self, k: int, i: int) -> tuple[int, ...]:
        return control_set(k, i, self.params, self._full[i])

    def select(
        self, k: int, i: int, F: CountTensor, rng: Optional[np.random.Generator] = None
    ) -> int:
        return greedy_choice(self.measure, i, self.controls(k, i), F)

    def __repr__(self) -> str:
        return f"ParametricPolicy(entries={[e.model_dump() for e in self.params.entries]})"


class GreedyPolicy(Policy):
    """Greedy measure maximization over every available control"""

    kind = PolicyKind.GREEDY

    def __init__(self, measure: InfoMeasure, available: np.ndarray) -> None:
        super().__init__(available)
        self.measure = measure

    def select(
        self, k: int, i: int, F: CountTensor, rng: Optional[np.random.Generator] = None
    ) -> int:
        return greedy_choice(self.measure, i, self._full[i], F)


class RandomPolicy(Policy):
    """Uniform draw over every available control"""

    kind = PolicyKind.RANDOM
    stochastic = True

    def select(
        self, k: int, i: int, F: CountTensor, rng: Optional[np.random.Generator] = None
    ) -> int:
        if rng is None:
            raise ValueError("RandomPolicy needs a random stream")
        full = self._full[i]
        return int(full[rng.integers(len(full))])


class FixedPolicy(Policy):
    """Open-loop control sequence; period k applies ``sequence[k - 1]``"""

    kind = PolicyKind.FIXED

    def __init__(self, sequence: Sequence[int], available: np.ndarray) -> None:
        super().__init__(available)
        self.sequence = tuple(int(u) for u in sequence)

    def select(
        self, k: int, i: int, F: CountTensor, rng: Optional[np.random.Generator] = None
    ) -> int:
        if not 1 <= k <= len(self.sequence):
            raise IndexError(f"Fixed sequence of length {len(self.sequence)} has no period {k}")
        u = self.sequence[k - 1]
        if u not in self._full[i]:
            raise ControlSetError(f"Control {u + 1} is not available in state {i + 1}")
        return u


def select_control(
    policy: Policy,
    k: int,
    i: int,
    F: CountTensor,
    rng: Optional[np.random.Generator] = None,
) -> int:
    return policy.select(k, i, F, rng)

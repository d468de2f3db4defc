"""
Example CMCs, the grid/maze compiler and the environment document format

Cells, states and controls are 1-based in documents and 0-based in the
compiled ``Cmc``. Grid controls: 1=up, 2=down, 3=left, 4=right.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    TypeAdapter,
    ValidationError,
    field_validator,
    model_validator,
)

from .common.logger import reset_logger_config
from .core import Cmc
from .exceptions import EnvironmentFormatError
from .policies import ParamShape
from .utils import get_fixture_path, normalized_fixture_name

__all__ = [
    "Direction",
    "NonBacktrackingCell",
    "GridSpec",
    "EnvironmentBundle",
    "compile_grid",
    "build_example",
    "load_environment",
    "save_environment",
    "render_ascii",
    "reachable_states",
    "shortest_path",
    "restrictive_transitions",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

DOCUMENT_ROW_TOLERANCE = 1e-9
MODIFIED_MAZE = "modified-maze"


class Direction(IntEnum):
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4

    @property
    def offset(self) -> tuple[int, int]:
        return {
            Direction.UP: (-1, 0),
            Direction.DOWN: (1, 0),
            Direction.LEFT: (0, -1),
            Direction.RIGHT: (0, 1),
        }[self]

    @property
    def arrow(self) -> str:
        return {Direction.UP: "^", Direction.DOWN: "v", Direction.LEFT: "<", Direction.RIGHT: ">"}[self]


class NonBacktrackingCell(BaseModel):
    """A cell that can only be left along ``exit``"""

    model_config = ConfigDict(frozen=True)

    cell: int = Field(ge=1)
    exit: Direction

    @field_validator("exit", mode="before")
    @classmethod
    def _parse_direction(cls, value: Any) -> Any:
        if not isinstance(value, str):
            return value
        value = value.strip()
        if value.isdigit():
            return int(value)
        try:
            return Direction[value.upper()]
        except KeyError:
            raise ValueError(f"Unknown direction `{value}`. Expected one of up, down, left, right")


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    walls: tuple[tuple[int, int], ...] = ()
    absorbing: tuple[int, ...] = ()
    non_backtracking: tuple[NonBacktrackingCell, ...] = ()
    entrance: int = Field(default=1, ge=1)

    @property
    def num_cells(self) -> int:
        return self.rows * self.cols

    def position(self, cell: int) -> tuple[int, int]:
        return divmod(cell - 1, self.cols)

    def neighbor(self, cell: int, direction: Direction) -> Optional[int]:
        """Adjacent cell in ``direction``, None past the boundary"""
        row, col = self.position(cell)
        dr, dc = direction.offset
        row, col = row + dr, col + dc
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            return None
        return row * self.cols + col + 1

    @property
    def wall_set(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(w) for w in self.walls)

    def blocked(self, cell: int, direction: Direction) -> bool:
        other = self.neighbor(cell, direction)
        return other is None or frozenset((cell, other)) in self.wall_set

    @model_validator(mode="after")
    def _check_cells(self) -> "GridSpec":
        n = self.num_cells

        def check(cell: int, what: str) -> None:
            if not 1 <= cell <= n:
                raise ValueError(f"{what} cell `{cell}` out of range [1, {n}]")

        check(self.entrance, "Entrance")
        for a, b in self.walls:
            check(a, "Wall")
            check(b, "Wall")
            if not any(self.neighbor(a, d) == b for d in Direction):
                raise ValueError(f"Wall `({a}, {b})` does not separate adjacent cells")
        for cell in self.absorbing:
            check(cell, "Absorbing")
        for nb in self.non_backtracking:
            check(nb.cell, "Non-backtracking")
            if nb.cell in self.absorbing:
                raise ValueError(f"Cell `{nb.cell}` cannot be both absorbing and non-backtracking")
            if self.blocked(nb.cell, nb.exit):
                raise ValueError(
                    f"Exit `{nb.exit.name.lower()}` of non-backtracking cell `{nb.cell}` is blocked"
                )
        return self


@dataclass(frozen=True)
class EnvironmentBundle:
    name: str
    cmc: Cmc
    entrance: int
    param_shape: ParamShape
    grid: Optional[GridSpec] = None
    # planning goal (maze exit), 0-based
    goal: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0 <= self.entrance < self.cmc.num_states:
            raise ValueError(f"Entrance `{self.entrance}` out of range [0, {self.cmc.num_states})")
        if self.goal is not None and not 0 <= self.goal < self.cmc.num_states:
            raise ValueError(f"Goal `{self.goal}` out of range [0, {self.cmc.num_states})")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.cmc.labels


def compile_grid(
    spec: GridSpec,
    name: str = "grid",
    param_shape: Optional[ParamShape] = None,
    goal: Optional[int] = None,
) -> EnvironmentBundle:
    """Deterministic grid CMC: states row-major, one control per cardinal direction"""
    n = spec.num_cells
    transitions = np.zeros((len(Direction), n, n))
    absorbing = set(spec.absorbing)
    exits = {nb.cell: nb.exit for nb in spec.non_backtracking}
    for cell in range(1, n + 1):
        for direction in Direction:
            target = cell
            if cell in absorbing:
                pass
            elif cell in exits and direction != exits[cell]:
                pass
            elif not spec.blocked(cell, direction):
                target = spec.neighbor(cell, direction)
            transitions[direction - 1, cell - 1, target - 1] = 1.0
    return EnvironmentBundle(
        name=name,
        cmc=Cmc(transitions),
        entrance=spec.entrance - 1,
        param_shape=param_shape or ParamShape(num_entries=1),
        grid=spec,
        goal=None if goal is None else goal - 1,
    )


def _example1(p: float) -> EnvironmentBundle:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Example 1 parameter `p={p}` must lie in [0, 1]")
    transitions = np.zeros((2, 2, 2))
    transitions[0, 0] = [p, 1.0 - p]
    transitions[1, 0, 0] = 1.0
    transitions[:, 1, 1] = 1.0
    return EnvironmentBundle(
        name="example1", cmc=Cmc(transitions), entrance=0, param_shape=ParamShape(num_entries=1)
    )


def _example2() -> EnvironmentBundle:
    # control u moves state u to state u + 1, everything else stays put
    transitions = np.zeros((4, 4, 4))
    for u in range(4):
        for i in range(4):
            transitions[u, i, i + 1 if u == i and i < 3 else i] = 1.0
    return EnvironmentBundle(
        name="example2", cmc=Cmc(transitions), entrance=0, param_shape=ParamShape(num_entries=3)
    )


def _example6() -> EnvironmentBundle:
    # states: 1 = spot unavailable, 2 = spot available, 3 = parked; controls: continue, park
    transitions = np.zeros((2, 3, 3))
    transitions[0, 0] = [0.75, 0.25, 0.0]
    transitions[0, 1] = [0.75, 0.25, 0.0]
    transitions[0, 2, 2] = 1.0
    transitions[1, 0, 0] = 1.0
    transitions[1, 1, 2] = 1.0
    transitions[1, 2, 2] = 1.0
    available = np.array([[True, False], [True, True], [False, True]])
    return EnvironmentBundle(
        name="example6",
        cmc=Cmc(transitions, available, labels=("A-bar", "A", "T")),
        entrance=0,
        param_shape=ParamShape(num_entries=1),
    )


def build_example(n: int, p: float = 0.0, variant: Optional[str] = None) -> EnvironmentBundle:
    """Builtin example ``n``; ``p`` applies to Example 1, ``variant`` to Example 4"""
    if variant is not None:
        if n != 4 or normalized_fixture_name(variant) != normalized_fixture_name(MODIFIED_MAZE):
            raise ValueError(f"Unknown variant `{variant}` for example {n}")
    if n == 1:
        return _example1(p)
    if n == 2:
        return _example2()
    if n == 6:
        return _example6()
    if n in (3, 4, 5):
        name = f"example{n}" + (MODIFIED_MAZE if variant else "")
        path = get_fixture_path("environments", name)
        if path is None:
            raise FileNotFoundError(f"Environment fixture `{name}` is missing from the package")
        return load_environment(path)
    raise ValueError(f"Unknown example `{n}`. Expected 1..6")


class _DocumentBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    param_shape: Optional[ParamShape] = None
    goal: Optional[int] = Field(default=None, ge=1)


class TensorRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    u: int = Field(ge=1)
    i: int = Field(ge=1)
    probs: list[float]

    @field_validator("probs")
    @classmethod
    def _stochastic(cls, probs: list[float]) -> list[float]:
        if any(p < 0.0 for p in probs):
            raise ValueError("Probabilities must be non-negative")
        total = sum(probs)
        if abs(total - 1.0) > DOCUMENT_ROW_TOLERANCE:
            raise ValueError(f"Row sums to `{total!r}`. Expected 1 within {DOCUMENT_ROW_TOLERANCE}")
        return probs


class TensorDocument(_DocumentBase):
    type: Literal["tensor"]
    states: int = Field(ge=1)
    controls: int = Field(ge=1)
    rows: list[TensorRow]
    # 1-based controls legal in each state; every control when omitted
    available: Optional[list[list[int]]] = None
    labels: Optional[list[str]] = None
    entrance: int = Field(default=1, ge=1)


class GridDocument(_DocumentBase):
    type: Literal["grid"]
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    walls: list[tuple[int, int]] = Field(default_factory=list)
    absorbing: list[int] = Field(default_factory=list)
    non_backtracking: list[NonBacktrackingCell] = Field(default_factory=list)
    entrance: int = Field(default=1, ge=1)


_document_adapter = TypeAdapter(
    Annotated[Union[TensorDocument, GridDocument], Field(discriminator="type")]
)


def _format_error(e: ValidationError) -> EnvironmentFormatError:
    first = e.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return EnvironmentFormatError(
        f"Invalid environment document at `{location}`: {first['msg']} ({e.error_count()} error(s))"
    )


def _tensor_bundle(doc: TensorDocument, name: str) -> EnvironmentBundle:
    S, U = doc.states, doc.controls
    transitions = np.full((U, S, S), np.nan)
    for index, row in enumerate(doc.rows):
        where = f"rows.{index}"
        if row.u > U or row.i > S:
            raise EnvironmentFormatError(f"Row `{where}` names `(u={row.u}, i={row.i})` outside {U} controls and {S} states")
        if len(row.probs) != S:
            raise EnvironmentFormatError(f"Row `{where}` has {len(row.probs)} probabilities. Expected {S}")
        probs = np.array(row.probs)
        total = probs.sum()
        if abs(total - 1.0) > 1e-12:
            logger.debug(
                f"[environment={name}] row `{where}` (u={row.u}, i={row.i}) sums to {total!r}, renormalized"
            )
            probs = probs / total
        transitions[row.u - 1, row.i - 1] = probs
    missing = np.argwhere(np.isnan(transitions[:, :, 0]))
    if len(missing):
        u, i = missing[0]
        raise EnvironmentFormatError(f"Row `(u={u + 1}, i={i + 1})` is missing from the document")
    available = None
    if doc.available is not None:
        if len(doc.available) != S:
            raise EnvironmentFormatError(f"Field `available` lists {len(doc.available)} states. Expected {S}")
        available = np.zeros((S, U), dtype=bool)
        for i, controls in enumerate(doc.available):
            for u in controls:
                if not 1 <= u <= U:
                    raise EnvironmentFormatError(f"Field `available.{i}` names control `{u}` outside [1, {U}]")
                available[i, u - 1] = True
    if not 1 <= doc.entrance <= S:
        raise EnvironmentFormatError(f"Field `entrance` is `{doc.entrance}`. Expected 1..{S}")
    try:
        cmc = Cmc(transitions, available, labels=tuple(doc.labels or ()))
    except ValueError as e:
        raise EnvironmentFormatError(f"Invalid environment document: {e}") from e
    return EnvironmentBundle(
        name=name,
        cmc=cmc,
        entrance=doc.entrance - 1,
        param_shape=doc.param_shape or ParamShape(num_entries=1),
        goal=None if doc.goal is None else doc.goal - 1,
    )


def load_environment(source: Union[str, Path, bytes]) -> EnvironmentBundle:
    """Parse a tensor or grid document from a path or raw JSON bytes"""
    if isinstance(source, bytes):
        raw, default_name = source, "environment"
    else:
        path = Path(source)
        raw, default_name = path.read_bytes(), path.stem
    try:
        doc = _document_adapter.validate_json(raw)
    except ValidationError as e:
        raise _format_error(e) from e
    name = doc.name or default_name
    if isinstance(doc, TensorDocument):
        return _tensor_bundle(doc, name)
    try:
        spec = GridSpec(
            rows=doc.rows,
            cols=doc.cols,
            walls=tuple(doc.walls),
            absorbing=tuple(doc.absorbing),
            non_backtracking=tuple(doc.non_backtracking),
            entrance=doc.entrance,
        )
    except ValidationError as e:
        raise _format_error(e) from e
    if doc.goal is not None and doc.goal > spec.num_cells:
        raise EnvironmentFormatError(f"Field `goal` is `{doc.goal}`. Expected 1..{spec.num_cells}")
    bundle = compile_grid(spec, name, doc.param_shape, doc.goal)
    logger.debug(f"[environment={name}] compiled {spec.rows}x{spec.cols} grid")
    return bundle


def save_environment(bundle: EnvironmentBundle) -> bytes:
    """Grid bundles keep their grid form; everything else is written as a full tensor"""
    common: dict[str, Any] = {
        "name": bundle.name,
        "param_shape": bundle.param_shape.model_dump(),
    }
    if bundle.goal is not None:
        common["goal"] = bundle.goal + 1
    if bundle.grid is not None:
        grid = bundle.grid
        doc = {
            "type": "grid",
            "rows": grid.rows,
            "cols": grid.cols,
            "walls": [list(w) for w in grid.walls],
            "absorbing": list(grid.absorbing),
            "non_backtracking": [
                {"cell": nb.cell, "exit": int(nb.exit)} for nb in grid.non_backtracking
            ],
            "entrance": grid.entrance,
            **common,
        }
    else:
        cmc = bundle.cmc
        doc = {
            "type": "tensor",
            "states": cmc.num_states,
            "controls": cmc.num_controls,
            "rows": [
                {"u": u + 1, "i": i + 1, "probs": [float(p) for p in cmc.transitions[u, i]]}
                for u in range(cmc.num_controls)
                for i in range(cmc.num_states)
            ],
            "entrance": bundle.entrance + 1,
            "labels": list(cmc.labels),
            **common,
        }
        if not cmc.available.all():
            doc["available"] = [[int(u) + 1 for u in cmc.controls_at(i)] for i in range(cmc.num_states)]
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def reachable_states(cmc: Cmc, start: int) -> set[int]:
    """States reachable from ``start`` under any available control"""
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for u in cmc.controls_at(i):
            for j in cmc.support(u, i):
                j = int(j)
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
    return seen


def shortest_path(
    cmc: Cmc,
    start: int,
    goal: int,
    admissible: Optional[list[tuple[int, ...]]] = None,
) -> Optional[list[int]]:
    """Breadth-first path on the transition graph; controls tried in ascending order"""
    parent: dict[int, Optional[int]] = {start: None}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        if i == goal:
            path = [i]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        controls = cmc.controls_at(i) if admissible is None else admissible[i]
        for u in controls:
            for j in cmc.support(u, i):
                j = int(j)
                if j not in parent:
                    parent[j] = i
                    queue.append(j)
    return None


def _absorbing_states(cmc: Cmc) -> set[int]:
    return {
        i
        for i in range(cmc.num_states)
        if all(cmc.transitions[u, i, i] == 1.0 for u in cmc.controls_at(i))
    }


def restrictive_transitions(bundle: EnvironmentBundle) -> set[tuple[int, int, int]]:
    """``(state, control, target)`` moves from reachable states into absorbing or non-backtracking states"""
    cmc = bundle.cmc
    restrictive = _absorbing_states(cmc)
    if bundle.grid is not None:
        restrictive |= {nb.cell - 1 for nb in bundle.grid.non_backtracking}
    found = set()
    for i in reachable_states(cmc, bundle.entrance):
        if i in restrictive:
            continue
        for u in cmc.controls_at(i):
            for j in cmc.support(u, i):
                if int(j) in restrictive:
                    found.add((i, u, int(j)))
    return found


def render_ascii(bundle: EnvironmentBundle, path: Optional[list[int]] = None) -> str:
    """Maze drawing: ``#`` absorbing, arrows for non-backtracking exits, ``*`` on the path"""
    grid = bundle.grid
    if grid is None:
        raise ValueError(f"Environment `{bundle.name}` is not a grid")
    on_path = {i + 1 for i in path or ()}
    absorbing = set(grid.absorbing)
    exits = {nb.cell: nb.exit for nb in grid.non_backtracking}

    def mark(cell: int) -> str:
        if cell in absorbing:
            return "#"
        if cell in exits:
            return exits[cell].arrow
        if cell in on_path:
            return "*"
        if cell == grid.entrance:
            return "E"
        if bundle.goal is not None and cell == bundle.goal + 1:
            return "X"
        return " "

    lines = ["+" + "---+" * grid.cols]
    for row in range(grid.rows):
        cells = [row * grid.cols + col + 1 for col in range(grid.cols)]
        line = "|"
        for cell in cells:
            line += f" {mark(cell)} " + ("|" if grid.blocked(cell, Direction.RIGHT) else " ")
        lines.append(line)
        below = "+"
        for cell in cells:
            below += ("---" if grid.blocked(cell, Direction.DOWN) else "   ") + "+"
        lines.append(below)
    return "\n".join(lines) + "\n"

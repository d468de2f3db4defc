"""
CSV and JSON artifacts: trajectories, curves, CEM traces, results and learned counts

States and controls are written 1-based. CSV files use LF line endings and
floats keep full ``repr`` precision, so reruns are byte-identical.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .common.logger import reset_logger_config
from .core import CountTensor
from .exceptions import EnvironmentFormatError

__all__ = [
    "write_trajectory_csv",
    "write_curve_csv",
    "write_cem_trace_csv",
    "write_json",
    "save_counts",
    "load_counts",
]

logger = logging.getLogger(__name__)
reset_logger_config(logger)

PathLike = Union[str, Path]


def _open_csv(path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="", encoding="utf-8")


def write_trajectory_csv(path: PathLike, trajectories: Sequence[Any]) -> None:
    """``period,state,control,h_bits,missing_info_bits,policy``; several trajectories are concatenated"""
    with _open_csv(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["period", "state", "control", "h_bits", "missing_info_bits", "policy"])
        for trajectory in trajectories:
            for r in trajectory.records:
                writer.writerow(
                    [r.period, r.state + 1, r.control + 1, repr(float(r.h)), repr(float(r.missing_information)), trajectory.policy]
                )
    logger.debug(f"[export] wrote {len(trajectories)} trajectories to {path}")


def write_curve_csv(path: PathLike, curves: Mapping[str, np.ndarray]) -> None:
    """One row per period starting at 0; one column per curve"""
    lengths = {len(c) for c in curves.values()}
    if len(lengths) != 1:
        raise ValueError(f"Curves have different lengths `{sorted(lengths)}`")
    names = list(curves)
    header = ["period", "mean_missing_info"] if len(names) == 1 else ["period"] + names
    with _open_csv(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for period in range(lengths.pop()):
            writer.writerow([period] + [repr(float(curves[n][period])) for n in names])


def write_cem_trace_csv(path: PathLike, trace: Sequence[Any]) -> None:
    size = len(trace[0].p) if trace else 0
    with _open_csv(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "best_objective"] + [f"p_{k + 1}" for k in range(size)])
        for row in trace:
            writer.writerow([row.iteration, repr(float(row.best_objective))] + [repr(p) for p in row.p])


def write_json(path: PathLike, record: Mapping[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8", newline="\n")


class CountsDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    states: int = Field(ge=1)
    controls: int = Field(ge=1)
    # counts[u][i][j]
    counts: list[list[list[int]]]


def save_counts(F: CountTensor) -> bytes:
    doc = {
        "states": F.num_states,
        "controls": F.num_controls,
        "counts": F.counts.tolist(),
    }
    return (json.dumps(doc) + "\n").encode("utf-8")


def load_counts(source: Union[PathLike, bytes]) -> CountTensor:
    raw = source if isinstance(source, bytes) else Path(source).read_bytes()
    try:
        doc = CountsDocument.model_validate_json(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise EnvironmentFormatError(f"Invalid counts document at `{location}`: {first['msg']}") from e
    try:
        counts = np.array(doc.counts, dtype=np.int64)
    except ValueError as e:
        raise EnvironmentFormatError(f"Counts are not a rectangular tensor: {e}") from e
    expected = (doc.controls, doc.states, doc.states)
    if counts.shape != expected:
        raise EnvironmentFormatError(f"Counts have shape `{counts.shape}`. Expected `{expected}`")
    if np.any(counts < 0):
        raise EnvironmentFormatError("Counts must be non-negative")
    return CountTensor(counts)

import importlib.metadata
import importlib.resources
import os
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

import cmc_explore.envs as envs

__all__ = [
    "get_package_version",
    "normalized_fixture_name",
    "get_fixture_path",
    "list_fixtures",
    "resolve_num_workers",
    "trajectory_rng",
]

FIXTURE_PACKAGE = "cmc_explore.fixtures"


def get_package_version(package_name: str = "cmc-explore") -> str:
    """Get package version"""
    try:
        return importlib.metadata.version(package_name)
    except importlib.metadata.PackageNotFoundError:
        warnings.warn(f"{package_name} not installed, using default version")
        return "unknown"


def normalized_fixture_name(name: str) -> str:
    """Normalize a fixture name: `Example 4`, `example-4` and `example4` are equal"""
    return name.strip().lower().replace("-", "").replace(" ", "").replace(".json", "")


def get_fixture_path(kind: str, name: str) -> Optional[Path]:
    """Locate ``fixtures/<kind>/<name>.json`` inside the installed package.

    Args:
        kind: fixture folder, ``environments`` or ``experiments``
        name: fixture name, normalized with :func:`normalized_fixture_name`

    Returns:
        The fixture path, or None (with a warning) when it does not exist
    """
    fixture_name = normalized_fixture_name(name)
    try:
        path = importlib.resources.files(FIXTURE_PACKAGE) / kind / f"{fixture_name}.json"
    except Exception as e:
        warnings.warn(f"Failed to locate fixture package `{FIXTURE_PACKAGE}`: {e}")
        return None
    if not path.is_file():
        warnings.warn(f"Fixture `{kind}/{fixture_name}.json` not found")
        return None
    return Path(str(path))


def list_fixtures(kind: str) -> list[str]:
    root = importlib.resources.files(FIXTURE_PACKAGE) / kind
    return sorted(
        entry.name[: -len(".json")]
        for entry in root.iterdir()
        if entry.name.endswith(".json")
    )


def resolve_num_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit request, else CMC_EXPLORE_THREADS, else cpu count"""
    cap = envs.CMC_EXPLORE_THREADS
    n = requested if requested else (cap if cap > 0 else (os.cpu_count() or 1))
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index``; unaffected by how many exist"""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))

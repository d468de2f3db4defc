"""
Environment variable configuration for cmc-explore

Values are read lazily on every attribute access, so tests and the CLI can
change ``os.environ`` at runtime. Extra variables can be registered by updating
``environment_variables``.
"""

import os
from typing import TYPE_CHECKING, Any, Callable

if TYPE_CHECKING:
    CMC_EXPLORE_THREADS: int = 0
    CMC_EXPLORE_LOGGING_LEVEL: str = "INFO"
    CMC_EXPLORE_LOG_FORMAT: str = ""
    CMC_EXPLORE_LOG_DATE_FORMAT: str = ""
    CMC_EXPLORE_APP_NAME: str = "cmc-explore"
    CMC_EXPLORE_LOG_TO_FILE: bool = False
    CMC_EXPLORE_LOG_DIR: str = "/tmp/logs"
    CMC_EXPLORE_LOG_FILENAME: str = "cmc_explore.log"
    CMC_EXPLORE_LOG_FILE_MAX_BYTES: int = 8388608
    CMC_EXPLORE_LOG_FILE_BACKUP_COUNT: int = 5

DEFAULT_APP_NAME = "cmc-explore"
DEFAULT_LOG_FORMAT = "%(asctime)s.%(msecs)03d [{app_name}] [%(threadName)s] %(levelname)s [%(name)s.%(funcName)s] [-] %(message)s"
DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_LOG_DIR = "/tmp/logs"
DEFAULT_LOG_FILENAME = "cmc_explore.log"
DEFAULT_LOG_FILE_MAX_BYTES = "8388608"
DEFAULT_LOG_FILE_BACKUP_COUNT = "5"

environment_variables: dict[str, Callable[[], Any]] = {
    # cap on concurrent trajectory / candidate workers, 0 means os.cpu_count()
    "CMC_EXPLORE_THREADS": lambda: int(os.getenv("CMC_EXPLORE_THREADS", "0")),
    "CMC_EXPLORE_LOGGING_LEVEL": lambda: os.getenv(
        "CMC_EXPLORE_LOGGING_LEVEL", "INFO"
    ).upper(),
    "CMC_EXPLORE_LOG_FORMAT": lambda: os.getenv(
        "CMC_EXPLORE_LOG_FORMAT", DEFAULT_LOG_FORMAT
    ),
    "CMC_EXPLORE_LOG_DATE_FORMAT": lambda: os.getenv(
        "CMC_EXPLORE_LOG_DATE_FORMAT", DEFAULT_DATE_FORMAT
    ),
    "CMC_EXPLORE_APP_NAME": lambda: os.getenv("CMC_EXPLORE_APP_NAME", DEFAULT_APP_NAME),
    "CMC_EXPLORE_LOG_TO_FILE": lambda: os.getenv(
        "CMC_EXPLORE_LOG_TO_FILE", "False"
    ).lower()
    in ("true", "1"),
    "CMC_EXPLORE_LOG_DIR": lambda: os.getenv("CMC_EXPLORE_LOG_DIR", DEFAULT_LOG_DIR),
    "CMC_EXPLORE_LOG_FILENAME": lambda: os.getenv(
        "CMC_EXPLORE_LOG_FILENAME", DEFAULT_LOG_FILENAME
    ),
    "CMC_EXPLORE_LOG_FILE_MAX_BYTES": lambda: int(
        os.getenv("CMC_EXPLORE_LOG_FILE_MAX_BYTES", DEFAULT_LOG_FILE_MAX_BYTES)
    ),
    "CMC_EXPLORE_LOG_FILE_BACKUP_COUNT": lambda: int(
        os.getenv("CMC_EXPLORE_LOG_FILE_BACKUP_COUNT", DEFAULT_LOG_FILE_BACKUP_COUNT)
    ),
}


def __getattr__(name: str) -> Any:
    if name in environment_variables:
        return environment_variables[name]()
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__() -> list[str]:
    return list(environment_variables.keys())

"""
logger configuration for cmc-explore modules
"""

import logging
import logging.handlers
import os
import warnings

import cmc_explore.envs as envs

_log_folder_created: set[str] = set()


def make_stream_handler() -> logging.StreamHandler:
    return logging.StreamHandler()


def ensure_log_folder_exists() -> None:
    log_folder = envs.CMC_EXPLORE_LOG_DIR
    if log_folder not in _log_folder_created:
        try:
            os.makedirs(log_folder, exist_ok=True)
            _log_folder_created.add(log_folder)
        except Exception as e:
            warnings.warn(f"Failed to create log folder {log_folder}: {e}")


def get_log_file_name() -> str:
    ensure_log_folder_exists()
    return os.path.join(envs.CMC_EXPLORE_LOG_DIR, envs.CMC_EXPLORE_LOG_FILENAME)


def make_file_handler() -> logging.handlers.RotatingFileHandler:
    return logging.handlers.RotatingFileHandler(
        filename=get_log_file_name(),
        maxBytes=envs.CMC_EXPLORE_LOG_FILE_MAX_BYTES,
        backupCount=envs.CMC_EXPLORE_LOG_FILE_BACKUP_COUNT,
        encoding="utf8",
    )


def make_formatter() -> logging.Formatter:
    fmt = envs.CMC_EXPLORE_LOG_FORMAT
    if "{app_name}" in fmt:
        fmt = fmt.format(app_name=envs.CMC_EXPLORE_APP_NAME)
    datefmt = envs.CMC_EXPLORE_LOG_DATE_FORMAT
    return logging.Formatter(fmt=fmt, datefmt=datefmt)


def reset_logger_config(logger: logging.Logger) -> None:
    logger.handlers.clear()

    logger.propagate = False

    handlers: list[logging.Handler] = [make_stream_handler()]
    if envs.CMC_EXPLORE_LOG_TO_FILE:
        handlers.append(make_file_handler())

    formatter = make_formatter()
    log_level = envs.CMC_EXPLORE_LOGGING_LEVEL

    for handler in handlers:
        handler.setFormatter(formatter)
        handler.setLevel(log_level)
        logger.addHandler(handler)

    logger.setLevel(log_level)


def reset_package_loggers() -> None:
    """Re-apply the env configuration to every logger already created by the package"""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if name.startswith("cmc_explore") and isinstance(logger, logging.Logger):
            reset_logger_config(logger)

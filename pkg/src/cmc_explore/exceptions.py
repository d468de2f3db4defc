__all__ = [
    "CmcExploreError",
    "ControlSetError",
    "CapacityError",
    "NumericError",
    "EnvironmentFormatError",
]


class CmcExploreError(Exception):
    """Base class for every error raised by cmc-explore"""


class ControlSetError(CmcExploreError, ValueError):
    """A restriction would empty a control set, or a parameter vector is malformed"""


class CapacityError(CmcExploreError):
    """An exact method was asked to enumerate more than its size guard allows"""


class NumericError(CmcExploreError, ArithmeticError):
    """A linear solve or an iteration failed numerically"""


class EnvironmentFormatError(CmcExploreError, ValueError):
    """An environment or counts document violates the schema"""

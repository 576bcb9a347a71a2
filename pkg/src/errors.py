#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# ERRORS MODULE v1.0
# CODEX: Exception hierarchy shared by every CureNet module.
# CODEX: Each error carries the process exit code the CLI reports for it.


class CureNetError(Exception):
    """
    CODEX: Base class for all CureNet errors.
    """
    exit_code = 1


class ConfigError(CureNetError, ValueError):
    """
    CODEX: Invalid configuration or run settings.
    """
    exit_code = 2


class ConstraintViolation(ConfigError):
    """
    CODEX: A temperature-profile bound is violated.

    Args:
        bound (str): Name of the violated bound
        message (str): Human readable description
    """

    def __init__(self, bound, message):
        super().__init__(message)
        self.bound = bound


class DataError(CureNetError, ValueError):
    """
    CODEX: Missing, malformed or non-finite input data.
    """
    exit_code = 3


class DomainError(CureNetError, ValueError):
    """
    CODEX: Argument outside the domain of a function.
    """
    exit_code = 3


class ShapeError(CureNetError, ValueError):
    """
    CODEX: Array shapes do not conform.
    """
    exit_code = 3


class StaleCacheError(ShapeError):
    """
    CODEX: A backward pass received a cache produced by other parameters.
    """


class NumericalError(CureNetError, ArithmeticError):
    """
    CODEX: Non-finite values or numerical breakdown.

    Args:
        message (str): Description
        index (int, optional): Offending particle or record index. Defaults to None.
    """
    exit_code = 4

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TrainingError(NumericalError):
    """
    CODEX: Training diverged (NaN loss or gradient).

    Args:
        message (str): Description
        step (int): Optimizer step or iteration at which training failed
    """

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})", index=step)
        self.step = step

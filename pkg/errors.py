#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Exception and warning types for Rotometry.

Every failure the library can raise derives from `RotometryError`. The
command line front end maps them onto a stable exit-code contract:

- 0: success
- 2: configuration problems (`ConfigError`, `DimensionCapError`)
- 3: numerical failures (`AssemblyError`, `SolverError`, `BracketError`)
- 1: anything unexpected

Non-fatal conditions are reported through `warnings.warn` with the warning
classes defined here and never change the exit code.
"""

from typing import Any, Dict


class RotometryError(Exception):
    """Base class. `context` carries machine-readable details for the CLI."""
    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def with_context(self, **extra: Any) -> "RotometryError":
        """Returns a copy of this error with more context (e.g. the grid point)."""
        merged = dict(self.context)
        merged.update(extra)
        prefix = ", ".join(f"{k}={v}" for k, v in extra.items())
        return type(self)(f"{self.message} [{prefix}]", **merged)


class ConfigError(RotometryError):
    exit_code = 2


class DimensionCapError(ConfigError):
    pass


class AssemblyError(RotometryError):
    exit_code = 3


class SolverError(RotometryError):
    exit_code = 3


class BracketError(RotometryError):
    exit_code = 3


class DegeneracyWarning(UserWarning):
    pass


class AdiabaticityWarning(UserWarning):
    pass


class CutoffWarning(UserWarning):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RotometryError):
        return exc.exit_code
    return 1


def error_payload(exc: BaseException) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "error": type(exc).__name__,
        "message": getattr(exc, "message", str(exc)),
        "exit_code": exit_code_for(exc),
    }
    for key, value in getattr(exc, "context", {}).items():
        payload.setdefault(key, value)
    return payload

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exception and warning types shared by the solvers, the estimators and the CLI.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """The input does not satisfy the hypothesis of a check."""


class ConfigError(ValueError):
    """
    Invalid experiment configuration.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int, optional
        1-based line number in the configuration file, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(RuntimeError):
    """
    A linear solve, eigensolve or time integration failed.

    The ``diagnostics`` mapping carries whatever the failing routine knew
    (step index, time, residual, offending node).
    """

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class NumericalWarning(UserWarning):
    """Non-fatal numerical diagnostic (tail mass, continuum proximity, boundary mass)."""

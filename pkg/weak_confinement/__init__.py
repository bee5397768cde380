#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Numerical verification of decay rates for Fokker-Planck and kinetic
equations with very weak (logarithmic) confinement.
"""

import importlib.metadata

from weak_confinement.errors import (
    ConfigError,
    DomainError,
    NumericalWarning,
    PreconditionError,
    SolverError,
)
from weak_confinement.grids import (
    PhaseField,
    PhaseGrid,
    RadialField,
    RadialGrid,
    geometric_radial_grid,
    uniform_radial_grid,
)
from weak_confinement.potentials import (
    PotentialKind,
    PotentialSpec,
    ProfileParams,
    lambda_star,
    mode_gap,
)
from weak_confinement.fp_macro import MacroSolverConfig, run_macro
from weak_confinement.spectral import SpectralProblem, poincare_gap
from weak_confinement.kinetic import KineticConfig, run_kinetic
from weak_confinement.inequalities import InequalityEstimate, sharp_nash_constant
from weak_confinement.rates import DecaySeries, RateFit, TheoremVerdict, fit_decay_exponent
from weak_confinement.config import ExperimentConfig, load_config, save_config
from weak_confinement.experiments import run_experiment, run_sweep

__all__ = [
    "ConfigError",
    "DomainError",
    "NumericalWarning",
    "PreconditionError",
    "SolverError",
    "PhaseField",
    "PhaseGrid",
    "RadialField",
    "RadialGrid",
    "geometric_radial_grid",
    "uniform_radial_grid",
    "PotentialKind",
    "PotentialSpec",
    "ProfileParams",
    "lambda_star",
    "mode_gap",
    "MacroSolverConfig",
    "run_macro",
    "SpectralProblem",
    "poincare_gap",
    "KineticConfig",
    "run_kinetic",
    "InequalityEstimate",
    "sharp_nash_constant",
    "DecaySeries",
    "RateFit",
    "TheoremVerdict",
    "fit_decay_exponent",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "run_experiment",
    "run_sweep",
]

# We use semantic versioning
# See https://semver.org/
try:
    __version__ = importlib.metadata.version("weak-confinement-lab")
except importlib.metadata.PackageNotFoundError:
    __version__ = "unknown"


def run_tests():
    """
    Run all tests.
    """
    import pytest
    import os

    base, _ = os.path.split(__file__)
    pytest.main(args=[base, "--doctest-modules"])

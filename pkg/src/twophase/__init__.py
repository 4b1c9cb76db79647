"""Periodic simulator and identity verifier for diffuse-interface two-phase flow.

Models: Navier-Stokes-Korteweg, and Navier-Stokes-Allen-Cahn /
Navier-Stokes-Cahn-Hilliard in reduced (incompressible phases) and general
(compressibility-regularized) form.
"""

from .constitutive import FluidParams, FreeEnergy, SampleW, chi_bar, gibbs_eval, helmholtz_reduced_eval, recover_state
from .errors import ConfigError, DomainError, ParameterError, SimulationBlowup, SolverError, UsageError
from .fields import GridSpec, differentiate, integrate_domain, solve_lambda_gamma
from .harness import Config, dump_config, parse_config, run_cli
from .models import ModelKind, PrimState, assemble_fluxes, entropy_production
from .reduction import IDENTITIES, convergence_order, run_identity
from .timestep import Scenario, simulate, stable_dt, step

__all__ = [
    "Config", "ConfigError", "DomainError", "FluidParams", "FreeEnergy", "GridSpec", "IDENTITIES",
    "ModelKind", "ParameterError", "PrimState", "SampleW", "Scenario", "SimulationBlowup", "SolverError",
    "UsageError", "assemble_fluxes", "chi_bar", "convergence_order", "differentiate", "dump_config",
    "entropy_production", "gibbs_eval", "helmholtz_reduced_eval", "integrate_domain", "parse_config",
    "recover_state", "run_cli", "run_identity", "simulate", "solve_lambda_gamma", "stable_dt", "step",
]

"""Backward-Euler simulator for Eulerian thermo-visco-elastodynamics with
creep on a cell-centred grid, with per-step energy and entropy ledgers."""
from .config import ConfigError, RunConfig, dump, load_config, parse_config
from .constitutive import (DissipationModel, DomainError, HeatModel, QuadraticCreep,
                           admissible_exponents, thermo_creep_material)
from .convergence import convergence_study
from .grid_ops import Grid
from .rothe_stepper import StepFailure, Trajectory, advance, newton_step, run
from .scenarios import SCENARIOS, ScenarioSpec, build_scenario, prepare, scenario_config
from .state import Problem, State, StepConfig

__version__ = "0.1.0"

__all__ = ["ConfigError", "RunConfig", "dump", "load_config", "parse_config",
           "DissipationModel", "DomainError", "HeatModel", "QuadraticCreep",
           "admissible_exponents", "thermo_creep_material", "convergence_study", "Grid",
           "StepFailure", "Trajectory", "advance", "newton_step", "run", "SCENARIOS",
           "ScenarioSpec", "build_scenario", "prepare", "scenario_config", "Problem", "State",
           "StepConfig"]

"""Built-in scenarios: initial states, default patches and problem setup.

Each scenario is a small construction for exercising one part of the model:

``rest_equilibrium``   uniform state at rest, an exact steady solution
``rigid_rotation``     strain carried by a kinematically prescribed rotation
``uniform_creep``      spatially uniform deviatoric strain relaxing by creep
``thermal_expansion``  boundary heating of a thermally expanding body
``heat_bump``          Gaussian temperature bump diffusing in a body held at rest
``gravity_settle``     body settling under gravity, optionally squeezed
``wave_attenuation``   standing shear wave damped by (hyper-)viscosity
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tensor_kernel as tk
from .config import InitialConfig, RunConfig
from .grid_ops import Grid, operators
from .state import Problem, State, StepConfig


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: InitialConfig = field(default_factory=InitialConfig)


@dataclass(frozen=True)
class Scenario:
    name: str
    patch: dict
    initial: Callable[[RunConfig, Grid], State]
    velocity: Optional[Callable[[RunConfig, Grid], Callable]] = None
    # closed energy ledger despite a prescribed velocity (a frozen body)
    frozen: bool = False


@dataclass(frozen=True)
class Setup:
    """Everything a run needs, derived from a :class:`RunConfig`."""

    config: RunConfig
    problem: Problem
    step: StepConfig
    initial: State

    @property
    def energy_closed(self) -> bool:
        """Whether the energy balances are asserted: no loads, insulated
        walls and no kinematic driving other than a body held at rest."""
        p = self.problem
        frozen = SCENARIOS[self.config.initial.scenario].frozen
        loads = (not callable(p.gravity) and not any(p.gravity)
                 and not callable(p.heat.source) and p.heat.source == 0)
        driven = p.prescribed_velocity is not None and not frozen
        return loads and p.heat.insulated and not driven


def _uniform(cfg: RunConfig, grid: Grid, v: Optional[np.ndarray] = None,
             E: Optional[np.ndarray] = None, theta: Optional[np.ndarray] = None) -> State:
    ini = cfg.initial
    n = grid.n
    v = np.zeros((n, 3)) if v is None else v
    E = np.broadcast_to(np.asarray(ini.strain, dtype=float), (n, 6)) if E is None else E
    theta = np.full(n, ini.theta0) if theta is None else theta
    return State(np.full(n, ini.rho0), v, E, theta, 0.0)


def _rest(cfg, grid):
    return _uniform(cfg, grid)


def _heat_bump(cfg, grid):
    ini = cfg.initial
    d = grid.centers - np.asarray(ini.center)
    d[:, [a for a in range(3) if a not in grid.active]] = 0.0
    r2 = np.sum(d * d, axis=1)
    return _uniform(cfg, grid, theta=ini.theta0 + ini.amplitude * np.exp(-r2 / ini.width ** 2))


def _gravity_settle(cfg, grid):
    # compress > 0 adds a velocity converging on the centre (rate -compress
    # there, zero normal velocity at the walls), a stress test for step halving
    ini = cfg.initial
    v = np.zeros((grid.n, 3))
    for a in grid.active:
        L = grid.lengths[a]
        v[:, a] = ini.compress * L / (2.0 * math.pi) * np.sin(2.0 * math.pi * grid.centers[:, a] / L)
    return _uniform(cfg, grid, v=v)


def _wave(cfg, grid):
    ini = cfg.initial
    x = grid.centers[:, 0] / grid.lengths[0]
    v = np.zeros((grid.n, 3))
    v[:, 1] = ini.amplitude * np.cos(math.pi * ini.wavenumber * x)
    return _uniform(cfg, grid, v=v)


@functools.lru_cache(maxsize=8)
def rotation_field(grid: Grid, omega: float) -> np.ndarray:
    """Minimum-norm in-plane cell velocity whose discrete mass divergence
    vanishes and whose discrete spin equals a rigid rotation at angular
    velocity ``omega`` in every cell (slip walls).

    On grids with an even number of cells per axis the constraints are
    consistent and the four central cells are at rest with exact spin.
    """
    if grid.shape[2] != 1:
        raise ValueError("rigid rotation is built for pseudo-2D grids (nz = 1)")
    n = grid.n
    ops = operators(grid)
    div = ops.divv("slip")[:, :2 * n]
    w12 = ops.spin("slip")[2 * n:3 * n, :2 * n]
    M = sp.vstack([div, w12]).tocsr()
    rhs = np.concatenate([np.zeros(n), np.full(n, -omega)])
    x = spla.lsqr(M, rhs, atol=1e-15, btol=1e-15, iter_lim=100 * n)[0]
    miss = np.max(np.abs(M @ x - rhs))
    if miss > 1e-8 * max(1.0, abs(omega)):
        raise ValueError(f"no discretely rigid rotation on grid {grid.shape} "
                         f"(constraint mismatch {miss:.2e}); use an even cell count")
    V = np.zeros((n, 3))
    V[:, 0], V[:, 1] = x[:n], x[n:]
    V.setflags(write=False)
    return V


def _at_rest(cfg, grid):
    zero = np.zeros((grid.n, 3))
    zero.setflags(write=False)
    return lambda t, x: zero


def _rotation_velocity(cfg, grid):
    V = rotation_field(grid, float(cfg.initial.omega))
    return lambda t, x: V


def _rotation(cfg, grid):
    return _uniform(cfg, grid, v=np.array(rotation_field(grid, float(cfg.initial.omega))))


def rotation_core(grid: Grid, radius: float = 0.1) -> np.ndarray:
    """Cells within ``radius`` of the box centre (where the field is rigid)."""
    c = 0.5 * np.asarray(grid.lengths)
    d = grid.centers[:, :2] - c[:2]
    return np.sqrt(np.sum(d * d, axis=1)) < radius


def eigen_drift(E: np.ndarray, E0: np.ndarray, cells: np.ndarray) -> float:
    """Max over ``cells`` of the eigenvalue distance between ``E`` and ``E0``."""
    lam = np.linalg.eigvalsh(tk.to_matrix(E[cells]))
    lam0 = np.linalg.eigvalsh(tk.to_matrix(np.broadcast_to(E0, (int(cells.sum()), 6))))
    return float(np.max(np.abs(lam - lam0)))


_TAU_ROT = 1.0 / 128.0

SCENARIOS: dict[str, Scenario] = {s.name: s for s in [
    Scenario("rest_equilibrium", {}, _rest),
    Scenario("rigid_rotation", {
        "grid.shape": (8, 8, 1),
        "material.expansion": 0.0,
        "dissipation.eta_shear": 0.0, "dissipation.eta_bulk": 0.0, "dissipation.mu": 0.0,
        "initial.strain": (0.0, 0.0, 0.0, 0.02, 0.01, 0.0),
        "time.tau": _TAU_ROT, "time.t_end": 1.0,
    }, _rotation, _rotation_velocity),
    Scenario("uniform_creep", {
        "grid.shape": (4, 4, 1),
        "material.shear_modulus": 1.0, "dissipation.creep_modulus": 2.0,
        "initial.strain": (0.1, -0.05, -0.05, 0.0, 0.0, 0.0),
        "time.tau": 0.1, "time.t_end": 5.0,
    }, _rest),
    Scenario("thermal_expansion", {
        "grid.shape": (12, 12, 1),
        "material.expansion": 0.2,
        "dissipation.eta_shear": 0.1, "dissipation.eta_bulk": 0.1,
        "heat.a1": 0.1, "heat.h_ext": (0.5, 0.0, 0.0, 0.0, 0.0, 0.0),
        "time.tau": 0.05, "time.t_end": 1.0,
    }, _rest),
    Scenario("heat_bump", {
        "grid.shape": (16, 16, 1),
        "material.expansion": 0.0,
        "initial.amplitude": 0.5,
        "time.tau": 0.02, "time.t_end": 0.2,
    }, _heat_bump, _at_rest, frozen=True),
    Scenario("gravity_settle", {
        "grid.shape": (12, 12, 1),
        "loading.gravity": (0.0, -1.0, 0.0),
        "dissipation.eta_shear": 0.1, "dissipation.eta_bulk": 0.1,
        "initial.compress": 8.0,
        "time.tau": 0.05, "time.t_end": 1.0,
    }, _gravity_settle),
    Scenario("wave_attenuation", {
        "grid.shape": (32, 1, 1),
        "dissipation.eta_shear": 0.01, "dissipation.eta_bulk": 0.01, "dissipation.mu": 1e-3,
        "initial.amplitude": 0.05, "initial.wavenumber": 2,
        "time.tau": 0.02, "time.t_end": 2.0,
    }, _wave),
]}


def scenario_patch(name: str) -> dict:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    return dict(SCENARIOS[name].patch)


def scenario_config(name: str, **changes) -> RunConfig:
    """Default configuration of a scenario with optional dotted-key changes."""
    cfg = RunConfig().replace(**scenario_patch(name))
    cfg.initial.scenario = name
    return cfg.replace(**changes)


def build_scenario(spec: ScenarioSpec, cfg: Optional[RunConfig] = None) -> tuple[State, dict]:
    """Initial state and default patch of a scenario.  Without ``cfg`` the
    state is built on the scenario's default configuration, with the
    parameters taken from ``spec.params``."""
    patch = scenario_patch(spec.name)
    if cfg is None:
        cfg = scenario_config(spec.name)
        params = {f"initial.{k}": v for k, v in vars(spec.params).items() if k != "scenario"}
        base = {f"initial.{k}": v for k, v in vars(InitialConfig()).items()}
        cfg = cfg.replace(**{k: v for k, v in params.items() if v != base[k]})
    state = SCENARIOS[spec.name].initial(cfg, cfg.make_grid())
    if not state.is_valid():
        raise ValueError(f"scenario {spec.name} produced an invalid initial state")
    return state, patch


def prepare(cfg: RunConfig) -> Setup:
    """Problem, step configuration and initial state for a configuration."""
    scen = SCENARIOS[cfg.initial.scenario]
    grid = cfg.make_grid()
    velocity = scen.velocity(cfg, grid) if scen.velocity is not None else None
    problem = Problem(grid, cfg.make_material(), cfg.make_dissipation(), cfg.make_heat(),
                      tuple(cfg.loading.gravity), velocity)
    initial, _ = build_scenario(ScenarioSpec(scen.name, cfg.initial), cfg)
    return Setup(cfg, problem, cfg.make_step(), initial)


__all__ = ["ScenarioSpec", "Scenario", "Setup", "SCENARIOS", "scenario_patch",
           "scenario_config", "build_scenario", "prepare", "rotation_field",
           "rotation_core", "eigen_drift"]

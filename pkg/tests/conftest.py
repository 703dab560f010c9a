import time

import numpy as np
import pytest

from thermovisc.constitutive import DissipationModel, HeatModel, QuadraticCreep, thermo_creep_material
from thermovisc.grid_ops import Grid, integrate
from thermovisc.rothe_stepper import run
from thermovisc.scenarios import SCENARIOS, prepare, scenario_config
from thermovisc.state import Problem, State
from thermovisc.thermo_diagnostics import check_balances


def random_state(grid: Grid, rng: np.random.Generator, t: float = 0.0, amp: float = 1.0) -> State:
    n = grid.n
    return State(1.0 + 0.3 * rng.random(n), 0.3 * amp * rng.normal(size=(n, 3)),
                 0.1 * amp * rng.normal(size=(n, 6)), 1.0 + 0.5 * rng.random(n), t)


def busy_problem(grid: Grid, **kw) -> Problem:
    """A problem with every constitutive and loading term switched on."""
    mat = thermo_creep_material(1.0, 0.8, 0.3, 1.2, 0.4)
    dis = DissipationModel(eta_shear=0.3, eta_bulk=0.2, mu=kw.pop("mu", 0.05), p=4.5,
                           creep=QuadraticCreep(2.0, activation=0.5))
    hm = HeatModel(kappa0=0.7, beta=1.5, a1=0.3, a2=0.1, h_ext={"xmin": 0.2}, source=0.1)
    return Problem(grid, mat, dis, hm, gravity=kw.pop("gravity", (0.1, -0.5, 0.0)), **kw)


class ScenarioRun:
    def __init__(self, name):
        self.cfg = scenario_config(name)
        self.setup = prepare(self.cfg)
        start = time.perf_counter()
        self.traj = run(self.setup.initial, self.cfg.time.t_end, self.setup.step, self.setup.problem)
        self.seconds = time.perf_counter() - start
        mass0 = integrate(self.setup.problem.grid, self.setup.initial.rho)
        self.mass0 = mass0
        self.balances = check_balances(self.traj.rows, self.setup.problem, self.setup.step, mass0,
                                       energy_closed=self.setup.energy_closed)


@pytest.fixture(scope="session")
def scenario_runs():
    """Every shipped scenario at its default settings, run once per session."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = ScenarioRun(name)
        return cache[name]

    get.names = tuple(SCENARIOS)
    return get

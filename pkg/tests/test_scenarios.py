import math

import numpy as np
import pytest

from thermovisc import tensor_kernel as tk
from thermovisc.config import InitialConfig
from thermovisc.grid_ops import Grid
from thermovisc.rothe_stepper import residual, run
from thermovisc.scenarios import (SCENARIOS, ScenarioSpec, build_scenario, eigen_drift,
                                  prepare, rotation_core, rotation_field, scenario_config,
                                  scenario_patch)
from thermovisc.thermo_diagnostics import balance_tolerance

NAMES = sorted(SCENARIOS)


@pytest.mark.parametrize("name", NAMES)
def test_initial_states_are_admissible(name):
    state, patch = build_scenario(ScenarioSpec(name))
    assert state.is_valid() and np.all(state.rho > 0) and np.all(state.theta > 0)
    assert patch == scenario_patch(name)
    again, _ = build_scenario(ScenarioSpec(name))
    assert np.array_equal(state.pack(), again.pack())


def test_scenario_parameters_are_applied():
    spec = ScenarioSpec("heat_bump", InitialConfig(amplitude=0.9, theta0=2.0))
    state, _ = build_scenario(spec)
    assert math.isclose(state.theta.min(), 2.0, rel_tol=0.01)
    assert state.theta.max() > 2.5


def test_unknown_scenario():
    with pytest.raises(KeyError):
        scenario_patch("vortex_street")


@pytest.mark.parametrize("name", NAMES)
def test_shipped_scenarios_pass_all_ledger_checks(scenario_runs, name):
    r = scenario_runs(name)
    assert math.isclose(r.traj.states[-1].t, r.cfg.time.t_end)
    assert r.seconds < 60.0
    bad = [b for b in r.balances if not b.ok]
    assert not bad, bad[:3]
    grid = r.setup.problem.grid
    assert grid.shape[0] * grid.shape[1] <= 32 * 32 and grid.shape[2] == 1


def test_rest_equilibrium_is_steady(scenario_runs):
    r = scenario_runs("rest_equilibrium")
    s0, s1 = r.traj.states[0], r.traj.states[1]
    res = residual(s0, s0.with_time(s1.t), r.setup.step, r.setup.problem)
    assert all(np.max(np.abs(b)) == 0.0 for b in res.values())
    assert np.array_equal(r.traj.states[-1].pack(), s0.pack())


def test_uniform_creep_scenario_decay(scenario_runs):
    r = scenario_runs("uniform_creep")
    E0 = np.asarray(r.cfg.initial.strain)
    for k, s in enumerate(r.traj.states):
        assert np.max(np.abs(s.E - E0 / 1.1 ** k)) <= 1e-10


def test_heat_bump_conserves_energy_and_raises_entropy(scenario_runs):
    r = scenario_runs("heat_bump")
    assert r.setup.energy_closed
    tol = balance_tolerance(r.setup.step, r.setup.problem)
    therm = [r.traj.rows[0].E_therm] + [row.E_therm for row in r.traj.rows]
    assert max(therm) - min(therm) <= tol
    ent = [row.entropy for row in r.traj.rows]
    assert all(b > a for a, b in zip(ent[:-1], ent[1:]))
    assert all(row.entropy_prod > 0 for row in r.traj.rows)
    assert all(np.max(np.abs(s.v)) == 0.0 for s in r.traj.states)


def test_thermal_expansion_is_heated_and_moves(scenario_runs):
    r = scenario_runs("thermal_expansion")
    rows = r.traj.rows
    assert rows[-1].E_therm > rows[0].E_therm
    assert max(row.E_kin for row in rows) > 0
    assert not r.setup.energy_closed


def test_gravity_settle_needs_step_halving(scenario_runs):
    r = scenario_runs("gravity_settle")
    first = r.traj.reports[0]
    assert first.subdivided and first.failures
    assert all(s.is_valid() for s in r.traj.states)
    assert max(row.substeps for row in r.traj.rows) > 1


def test_wave_attenuation_decays_faster_with_more_hyperviscosity(scenario_runs):
    base = scenario_runs("wave_attenuation")
    mech = [row.E_kin + row.E_stored for row in base.traj.rows]
    assert all(b < a for a, b in zip(mech[:-1], mech[1:]))
    stiff = scenario_config("wave_attenuation", **{"dissipation.mu": 1e-1, "time.t_end": 0.5})
    setup = prepare(stiff)
    traj = run(setup.initial, 0.5, setup.step, setup.problem)
    k = len(traj.rows) - 1
    assert math.isclose(traj.rows[k].t, base.traj.rows[k].t)
    assert traj.rows[k].E_kin + traj.rows[k].E_stored < mech[k]


def test_rotation_field_is_rigid_in_the_core():
    grid = Grid((8, 8, 1))
    V = rotation_field(grid, 2 * math.pi)
    assert not V.flags.writeable
    core = rotation_core(grid)
    assert core.sum() == 4
    assert np.allclose(V[core], 0.0, atol=1e-10)
    with pytest.raises(ValueError, match="even"):
        rotation_field(Grid((7, 7, 1)), 1.0)


def test_rigid_rotation_preserves_core_eigenvalues(scenario_runs):
    r = scenario_runs("rigid_rotation")
    grid = r.setup.problem.grid
    E0 = np.asarray(r.cfg.initial.strain)
    core = rotation_core(grid)
    drift = eigen_drift(r.traj.states[-1].E, E0, core)
    assert drift < 0.2 * float(np.max(np.abs(np.linalg.eigvalsh(tk.to_matrix(E0)))))
    assert np.array_equal(r.traj.states[-1].rho, r.traj.states[0].rho)


def test_energy_closed_flags():
    flags = {n: prepare(scenario_config(n)).energy_closed for n in NAMES}
    assert flags == {"gravity_settle": False, "heat_bump": True, "rest_equilibrium": True,
                     "rigid_rotation": False, "thermal_expansion": False,
                     "uniform_creep": True, "wave_attenuation": True}

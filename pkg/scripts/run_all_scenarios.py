"""Run every shipped scenario at its defaults and print a ledger summary."""
import argparse
import time
from pathlib import Path

from thermovisc.grid_ops import integrate
from thermovisc.io import write_csv
from thermovisc.rothe_stepper import run
from thermovisc.scenarios import SCENARIOS, prepare, scenario_config
from thermovisc.thermo_diagnostics import check_balances


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, help="directory for one ledger CSV per scenario")
    args = ap.parse_args()
    for name in SCENARIOS:
        cfg = scenario_config(name)
        setup = prepare(cfg)
        start = time.perf_counter()
        traj = run(setup.initial, cfg.time.t_end, setup.step, setup.problem)
        secs = time.perf_counter() - start
        mass0 = integrate(setup.problem.grid, setup.initial.rho)
        reports = check_balances(traj.rows, setup.problem, setup.step, mass0,
                                 energy_closed=setup.energy_closed)
        ok = all(r.ok for r in reports)
        drift = max(r.mass_drift for r in traj.rows)
        halved = sum(1 for r in traj.reports if r.subdivided)
        print(f"{name:18s} steps={len(traj.rows):4d} subdivided={halved:2d} "
              f"mass_drift={drift:.1e} closed={setup.energy_closed!s:5s} "
              f"balances={'ok' if ok else 'VIOLATED'} {secs:.1f}s")
        if args.out:
            write_csv(traj.rows, args.out / f"{name}.csv")


if __name__ == "__main__":
    main()

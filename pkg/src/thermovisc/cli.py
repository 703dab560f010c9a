"""Command line: ``thermovisc run|check|converge --config FILE``.

Exit codes: 0 ok, 1 configuration error, 2 step failure, 3 balance
violation beyond tolerance.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from threadpoolctl import threadpool_limits

from .config import ConfigError, RunConfig, dump, load_config, validate
from .convergence import convergence_study
from .grid_ops import integrate
from .io import write_csv, write_text, write_vtk
from .rothe_stepper import StepFailure, run
from .scenarios import prepare
from .thermo_diagnostics import check_balances

EXIT_OK, EXIT_CONFIG, EXIT_STEP, EXIT_BALANCE = 0, 1, 2, 3

log = logging.getLogger("thermovisc")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermovisc",
                                description="Backward-Euler thermo-visco-elastodynamics runs.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write the ledger")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--tau", type=float)
    r.add_argument("--tend", type=float)
    r.add_argument("--out", type=Path)
    r.add_argument("--vtk-every", type=int, dest="vtk_every")
    c = sub.add_parser("check", help="validate a configuration and print it with defaults")
    c.add_argument("--config", required=True, type=Path)
    v = sub.add_parser("converge", help="temporal convergence study under step halving")
    v.add_argument("--config", required=True, type=Path)
    v.add_argument("--levels", type=int, default=3)
    for s in (r, c, v):
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(path: Path, overrides: dict) -> RunConfig:
    cfg = load_config(path)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = cfg.replace(**overrides)
    for note in validate(cfg):
        log.warning(note)
    return cfg


def _run(cfg: RunConfig, out: Path) -> int:
    setup = prepare(cfg)
    grid = setup.problem.grid
    every = cfg.output.vtk_every
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "config.ini", dump(cfg))
    if every:
        write_vtk(grid, setup.initial, out / "state_00000.vtk")
    count = [0]

    def snapshot(state, report):
        count[0] += 1
        if every and count[0] % every == 0:
            write_vtk(grid, state, out / f"state_{count[0]:05d}.vtk")

    try:
        traj = run(setup.initial, cfg.time.t_end, setup.step, setup.problem, callback=snapshot)
    except StepFailure as exc:
        if exc.trajectory is not None:
            write_csv(exc.trajectory.rows, out / cfg.output.csv)
            write_vtk(grid, exc.trajectory.states[-1], out / "failed_from.vtk")
        write_text(out / "failure.txt", f"{exc}\n")
        log.error("step failure: %s", exc)
        return EXIT_STEP
    write_csv(traj.rows, out / cfg.output.csv)
    mass0 = integrate(grid, setup.initial.rho)
    reports = check_balances(traj.rows, setup.problem, setup.step, mass0,
                             energy_closed=setup.energy_closed)
    bad = [r for r in reports if not r.ok]
    halved = sum(1 for rep in traj.reports if rep.subdivided)
    print(f"{cfg.initial.scenario}: {len(traj.rows)} steps to t={traj.states[-1].t:.6g}, "
          f"{halved} subdivided, ledger {out / cfg.output.csv}")
    if bad:
        r = bad[0]
        print(f"balance violation at t={r.t:.6g}: mass_drift={r.mass_drift:.3e} "
              f"slack_mech={r.slack_mech:.3e} slack_total={r.slack_total:.3e} "
              f"entropy_prod={r.entropy_prod:.3e} (tol {r.tol_balance:.1e})")
        return EXIT_BALANCE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = _load(args.config, {"time.tau": args.tau, "time.t_end": args.tend,
                                      "output.vtk_every": args.vtk_every,
                                      "output.directory": None if args.out is None
                                      else str(args.out)})
        else:
            cfg = _load(args.config, {})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    with threadpool_limits(limits=cfg.solver.threads):
        if args.command == "check":
            sys.stdout.write(dump(cfg))
            return EXIT_OK
        if args.command == "run":
            return _run(cfg, Path(cfg.output.directory))
        if args.levels < 3:
            print("config error: a convergence study needs --levels >= 3", file=sys.stderr)
            return EXIT_CONFIG
        try:
            table = convergence_study(cfg, args.levels)
        except StepFailure as exc:
            print(f"step failure: {exc}", file=sys.stderr)
            return EXIT_STEP
        print(table.format())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Temporal self-convergence under step halving.

Level ``j`` runs with ``tau / 2**j`` on a fixed grid.  Consecutive levels are
compared through their piecewise-affine interpolants on the finer time
grid: ``L^inf(L^2)`` for ``E`` and ``theta`` and ``L^2(H^1)`` for ``v``.  The
observed order is ``log2(d_j / d_{j+1})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor_kernel as tk
from .config import RunConfig
from .grid_ops import Grid, integrate, velocity_gradient
from .rothe_stepper import Trajectory, run
from .scenarios import Setup, eigen_drift, prepare, rotation_core

FIELDS = ("E", "theta", "v")


@dataclass
class ConvergenceTable:
    taus: list
    distances: dict                     # field -> d_j, j = 0 .. levels-2
    orders: dict                        # field -> order_j, j = 0 .. levels-3
    trajectories: list = field(default_factory=list)

    def format(self) -> str:
        lines = ["level tau " + " ".join(f"d_{f} order_{f}" for f in FIELDS)]
        for j, tau in enumerate(self.taus[:-1]):
            cells = []
            for f in FIELDS:
                d = self.distances[f][j]
                o = self.orders[f][j - 1] if j >= 1 else math.nan
                cells.append(f"{d:.6e} {o:.4f}")
            lines.append(f"{j} {tau:.6g} " + " ".join(cells))
        return "\n".join(lines)


def _l2(grid: Grid, f: np.ndarray) -> float:
    return math.sqrt(max(integrate(grid, f), 0.0))


def _h1_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    ga = velocity_gradient(grid, a, bc="slip")
    gb = velocity_gradient(grid, b, bc="slip")
    return integrate(grid, np.sum(a * b, axis=1) + np.sum(ga * gb, axis=(1, 2)))


def interpolant_distance(coarse: Trajectory, fine: Trajectory, grid: Grid) -> dict:
    """Distances between the affine interpolants of two runs, evaluated on
    the fine time grid (exact when the coarse nodes are fine nodes)."""
    dE = dth = 0.0
    v_sq = 0.0
    prev = None
    for s in fine.states:
        c = coarse.piecewise_affine(s.t)
        e = s.E - c.E
        dE = max(dE, _l2(grid, tk.ddot(e, e)))
        dth = max(dth, _l2(grid, (s.theta - c.theta) ** 2))
        dv = s.v - c.v
        if prev is not None:
            t0, a = prev
            h = s.t - t0
            v_sq += h / 3.0 * (_h1_inner(grid, a, a) + _h1_inner(grid, a, dv)
                               + _h1_inner(grid, dv, dv))
        prev = (s.t, dv)
    return {"E": dE, "theta": dth, "v": math.sqrt(max(v_sq, 0.0))}


def observed_orders(d: list, floor: float = 1e-12) -> list:
    """``log2`` ratios of consecutive distances; pairs at or below ``floor``
    (round-off, nothing to converge) give ``nan``."""
    out = []
    for a, b in zip(d[:-1], d[1:]):
        out.append(math.log2(a / b) if a > floor and b > floor else math.nan)
    return out


def convergence_study(cfg: RunConfig, levels: int, keep: bool = False,
                      tau: Optional[float] = None) -> ConvergenceTable:
    """Run ``levels`` step sizes ``tau, tau/2, ...`` and tabulate distances
    and observed orders.  ``keep`` retains the trajectories."""
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    tau0 = cfg.time.tau if tau is None else tau
    taus = [tau0 / 2 ** j for j in range(levels)]
    trajs = []
    grid = None
    for t in taus:
        setup = prepare(cfg.replace(**{"time.tau": t}))
        grid = setup.problem.grid
        trajs.append(run(setup.initial, cfg.time.t_end, setup.step, setup.problem, ledger=False))
    dist = {f: [] for f in FIELDS}
    for a, b in zip(trajs[:-1], trajs[1:]):
        d = interpolant_distance(a, b, grid)
        for f in FIELDS:
            dist[f].append(d[f])
    orders = {f: observed_orders(dist[f]) for f in FIELDS}
    return ConvergenceTable(taus, dist, orders, trajs if keep else [])


def measure_study(cfg: RunConfig, levels: int, measure: Callable[[Setup, Trajectory], float],
                  tau: Optional[float] = None) -> tuple[list, list, list]:
    """``(taus, values, orders)`` of a scalar error measure under step
    halving, e.g. the eigenvalue drift of a rigid rotation."""
    tau0 = cfg.time.tau if tau is None else tau
    taus = [tau0 / 2 ** j for j in range(levels)]
    values = []
    for t in taus:
        setup = prepare(cfg.replace(**{"time.tau": t}))
        traj = run(setup.initial, cfg.time.t_end, setup.step, setup.problem, ledger=False)
        values.append(float(measure(setup, traj)))
    return taus, values, observed_orders(values, floor=0.0)


def rotation_drift(setup: Setup, traj: Trajectory) -> float:
    """Eigenvalue drift of ``E`` in the rigidly rotating core at the end."""
    grid = setup.problem.grid
    return eigen_drift(traj.states[-1].E, np.asarray(setup.config.initial.strain),
                       rotation_core(grid))


__all__ = ["ConvergenceTable", "convergence_study", "interpolant_distance", "observed_orders",
           "measure_study", "rotation_drift"]

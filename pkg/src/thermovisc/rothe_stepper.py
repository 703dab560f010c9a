"""Backward-Euler (Rothe) time stepping: damped Newton per step, adaptive
step halving and the piecewise-constant/affine interpolants of a run."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .assembly import BLOCKS, Fluxes, assemble, block_slices
from .state import (EvaluationError, Forcing, Problem, State, StepConfig,
                    interval_forcing)

log = logging.getLogger(__name__)

MIN_LINE_SEARCH = 2.0 ** -30


class StepFailure(RuntimeError):
    """A global step could not be completed within the halving cap."""

    def __init__(self, message: str, report: Optional["StepReport"] = None):
        super().__init__(message)
        self.report = report
        self.trajectory: Optional["Trajectory"] = None   # accepted part of the run


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual: float
    history: list = field(default_factory=list)       # per-iteration block inf-norms
    line_search: list = field(default_factory=list)   # accepted damping factors
    nonpositive_trials: int = 0                        # trial states with rho or theta <= 0
    message: str = ""


@dataclass
class Substep:
    prev: State
    cur: State
    tau: float
    forcing: Forcing
    fluxes: Fluxes
    newton: NewtonReport


@dataclass
class StepReport:
    """Outcome of one global step (possibly subdivided)."""

    t: float
    tau: float
    substeps: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    max_depth: int = 0

    @property
    def iterations(self) -> int:
        return sum(s.newton.iterations for s in self.substeps)

    @property
    def residual(self) -> float:
        return max((s.newton.residual for s in self.substeps), default=0.0)

    @property
    def subdivided(self) -> bool:
        return len(self.substeps) > 1

    @property
    def line_search(self) -> list:
        return [a for s in self.substeps for a in s.newton.line_search]


def residual(prev: State, cur: State, cfg: StepConfig, problem: Problem,
             tau: Optional[float] = None) -> dict[str, np.ndarray]:
    """Block residuals of the step ``prev -> cur`` keyed by
    ``mass``/``momentum``/``strain``/``heat``."""
    tau = cur.t - prev.t if tau is None else tau
    forcing = interval_forcing(problem, prev.t, prev.t + tau)
    R, _, _ = assemble(prev, cur, tau, cfg, problem, forcing, jacobian=False)
    n = problem.grid.n
    return {k: R[s] for k, s in block_slices(n).items()}


def _block_norms(R: np.ndarray, n: int) -> dict[str, float]:
    return {k: float(np.max(np.abs(R[s]), initial=0.0)) for k, s in block_slices(n).items()}


def _lu_solve(J: sp.csc_matrix, b: np.ndarray) -> Optional[np.ndarray]:
    """Sparse LU solve.  The fast ordering (symmetric structure, diagonal
    pivots preferred) is tried first and kept only if the linear residual is
    small; otherwise the default column ordering is used."""
    scale = max(float(np.max(np.abs(b), initial=0.0)), 1e-300)
    for kw in (dict(permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True)), {}):
        try:
            x = spla.splu(J, **kw).solve(b)
        except RuntimeError:
            continue
        if np.all(np.isfinite(x)) and np.max(np.abs(J @ x - b)) <= 1e-8 * scale:
            return x
    return None


def _solve_layers(J: sp.csc_matrix) -> list:
    """Group the unknowns into layers of strongly connected components such
    that every layer only depends on earlier ones (block lower-triangular
    form).  A fully coupled matrix gives a single layer."""
    ncomp, lab = connected_components(J, directed=True, connection="strong")
    n = J.shape[0]
    if ncomp == 1:
        return [np.arange(n)]
    C = J.tocoo()
    off = lab[C.row] != lab[C.col]
    D = sp.csr_matrix((np.ones(int(off.sum())), (lab[C.row[off]], lab[C.col[off]])),
                      shape=(ncomp, ncomp))
    solved = np.zeros(ncomp, dtype=bool)
    layers = []
    while not solved.all():
        waiting = D @ (~solved).astype(float)
        ready = (~solved) & (waiting == 0)
        layers.append(np.flatnonzero(ready[lab]))
        solved |= ready
    return layers


def _factor_solve(J: sp.spmatrix, b: np.ndarray) -> Optional[np.ndarray]:
    """Solve ``J x = b`` layer by layer over the block-triangular structure
    of ``J``; each layer is factorized on its own."""
    J = sp.csc_matrix(J, copy=True)
    J.eliminate_zeros()
    layers = _solve_layers(J)
    if len(layers) == 1:
        return _lu_solve(J, b)
    x = np.zeros_like(b)
    done = np.zeros(len(b), dtype=bool)
    Jr = J.tocsr()
    for idx in layers:
        rows = Jr[idx]
        rhs = b[idx] - rows[:, done] @ x[done] if done.any() else b[idx]
        xi = _lu_solve(sp.csc_matrix(rows[:, idx]), rhs)
        if xi is None:
            return None
        x[idx] = xi
        done[idx] = True
    scale = max(float(np.max(np.abs(b), initial=0.0)), 1e-300)
    if np.max(np.abs(J @ x - b)) > 1e-8 * scale:
        return None
    return x


def newton_step(prev: State, guess: State, tau: float, cfg: StepConfig, problem: Problem,
                forcing: Optional[Forcing] = None) -> tuple[State, NewtonReport, Optional[Fluxes]]:
    """Solve one backward-Euler step by damped Newton with backtracking on the
    infinity norm of the residual."""
    t1 = prev.t + tau
    forcing = forcing or interval_forcing(problem, prev.t, t1)
    n = problem.grid.n
    x = guess.with_time(t1).pack()
    report = NewtonReport(False, 0, math.inf)
    if cfg.mode == "picard":
        return _picard(prev, x, tau, cfg, problem, forcing, report)
    try:
        R, J, fl = assemble(prev, State.unpack(x, n, t1), tau, cfg, problem, forcing)
    except EvaluationError as exc:
        report.message = f"initial guess invalid: {exc}"
        return guess, report, None
    norm = float(np.max(np.abs(R)))
    report.history.append(_block_norms(R, n))
    for it in range(cfg.max_newton + 1):
        report.residual = norm
        if norm <= cfg.tol_newton:
            report.converged = True
            break
        if it == cfg.max_newton:
            report.message = "Newton iteration cap reached"
            break
        dx = _factor_solve(J, -R)
        if dx is None:
            report.message = "singular Jacobian"
            break
        report.iterations += 1
        alpha = 1.0
        accepted = False
        while alpha >= MIN_LINE_SEARCH:
            xt = x + alpha * dx
            try:
                Rt, _, _ = assemble(prev, State.unpack(xt, n, t1), tau, cfg, problem, forcing,
                                    jacobian=False)
            except EvaluationError:
                report.nonpositive_trials += 1
                alpha *= 0.5
                continue
            nt = float(np.max(np.abs(Rt)))
            if nt < norm or (alpha == 1.0 and nt <= cfg.tol_newton):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            report.message = "line search failed"
            if report.nonpositive_trials:
                report.message += f" ({report.nonpositive_trials} trial states lost positivity)"
            break
        report.line_search.append(alpha)
        x = xt
        R, J, fl = assemble(prev, State.unpack(x, n, t1), tau, cfg, problem, forcing)
        norm = float(np.max(np.abs(R)))
        report.history.append(_block_norms(R, n))
    report.residual = norm
    return State.unpack(x, n, t1), report, fl


def _picard(prev, x, tau, cfg, problem, forcing, report):
    """Staggered sweeps rho -> (v, E) -> theta, each a Newton solve on its
    diagonal block with the other unknowns frozen."""
    n = problem.grid.n
    t1 = prev.t + tau
    sl = block_slices(n)
    groups = [np.r_[sl["mass"]], np.r_[sl["momentum"].start:sl["strain"].stop],
              np.r_[sl["heat"]]]
    fl = None
    for sweep in range(cfg.max_newton):
        try:
            R, J, fl = assemble(prev, State.unpack(x, n, t1), tau, cfg, problem, forcing)
        except EvaluationError as exc:
            report.message = str(exc)
            return State.unpack(x, n, t1), report, None
        report.residual = float(np.max(np.abs(R)))
        report.history.append(_block_norms(R, n))
        if report.residual <= cfg.tol_newton:
            report.converged = True
            return State.unpack(x, n, t1), report, fl
        for idx in groups:
            for _ in range(cfg.max_newton):
                R, J, _ = assemble(prev, State.unpack(x, n, t1), tau, cfg, problem, forcing)
                r = R[idx]
                if np.max(np.abs(r)) <= 0.1 * cfg.tol_newton:
                    break
                dx = _factor_solve(J[idx][:, idx], -r)
                if dx is None:
                    report.message = "singular diagonal block"
                    return State.unpack(x, n, t1), report, fl
                alpha = 1.0
                while alpha >= MIN_LINE_SEARCH:
                    xt = x.copy()
                    xt[idx] += alpha * dx
                    try:
                        Rt, _, _ = assemble(prev, State.unpack(xt, n, t1), tau, cfg, problem,
                                            forcing, jacobian=False)
                    except EvaluationError:
                        alpha *= 0.5
                        continue
                    if np.max(np.abs(Rt[idx])) < np.max(np.abs(r)):
                        break
                    alpha *= 0.5
                else:
                    break
                x = xt
                report.iterations += 1
                report.line_search.append(alpha)
    report.message = "Picard sweep cap reached"
    return State.unpack(x, n, t1), report, fl


def advance(prev: State, cfg: StepConfig, problem: Problem, tau: Optional[float] = None
            ) -> tuple[State, StepReport]:
    """Advance by one global step, halving the step (recursively, at most
    ``cfg.max_halvings`` times) when Newton fails, so that the global time
    grid is still hit exactly."""
    tau = cfg.tau if tau is None else tau
    t_end = prev.t + tau
    report = StepReport(t_end, tau)

    def solve(state: State, t1: float, depth: int) -> State:
        h = t1 - state.t
        forcing = interval_forcing(problem, state.t, t1)
        cur, nr, fl = newton_step(state, state, h, cfg, problem, forcing)
        if nr.converged and cur.is_valid():
            report.substeps.append(Substep(state, cur, h, forcing, fl, nr))
            report.max_depth = max(report.max_depth, depth)
            return cur
        report.failures.append((state.t, h, nr.message))
        if depth >= cfg.max_halvings:
            raise StepFailure(
                f"step from t={prev.t:.6g} failed after {depth} halvings "
                f"(last: tau={h:.3g}, {nr.message}, residual={nr.residual:.3e})", report)
        log.info("halving step at t=%.6g (tau=%.3g): %s", state.t, h, nr.message)
        tm = state.t + 0.5 * h
        mid = solve(state, tm, depth + 1)
        return solve(mid, t1, depth + 1)

    cur = solve(prev, t_end, 0)
    return cur.with_time(t_end), report


@dataclass
class Trajectory:
    """Accepted states at the global time grid with per-step reports and
    ledger rows.  Immutable by convention once returned."""

    states: list
    reports: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def _locate(self, t: float) -> int:
        times = self.times
        if t < times[0] - 1e-14 or t > times[-1] + 1e-12 * max(1.0, abs(times[-1])):
            raise ValueError(f"t={t} outside [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="left"))
        return min(max(k, 0), len(times) - 1)

    def piecewise_constant(self, t: float) -> State:
        """Right-endpoint value ``state_k`` on ``(t_{k-1}, t_k]``."""
        return self.states[self._locate(t)]

    def piecewise_affine(self, t: float) -> State:
        k = self._locate(t)
        if k == 0:
            return self.states[0]
        a, b = self.states[k - 1], self.states[k]
        s = (t - a.t) / (b.t - a.t)
        return State((1 - s) * a.rho + s * b.rho, (1 - s) * a.v + s * b.v,
                     (1 - s) * a.E + s * b.E, (1 - s) * a.theta + s * b.theta, t)


def time_grid(t0: float, t_end: float, tau: float) -> list[float]:
    n = max(0, math.ceil((t_end - t0) / tau - 1e-9))
    return [min(t0 + k * tau, t_end) for k in range(1, n + 1)]


def run(initial: State, t_end: float, cfg: StepConfig, problem: Problem,
        ledger: bool = True, callback: Optional[Callable[[State, StepReport], None]] = None
        ) -> Trajectory:
    """Run from ``initial`` to ``t_end`` on the grid ``t_k = t0 + k tau``."""
    from .thermo_diagnostics import LedgerAccumulator

    if not initial.is_valid():
        raise ValueError("initial state needs rho > 0, theta > 0 and finite fields")
    traj = Trajectory([initial])
    acc = LedgerAccumulator(problem, cfg, initial) if ledger else None
    state = initial
    for t1 in time_grid(initial.t, t_end, cfg.tau):
        try:
            state, rep = advance(state, cfg, problem, tau=t1 - state.t)
        except StepFailure as exc:
            exc.trajectory = traj
            raise
        traj.states.append(state)
        traj.reports.append(rep)
        if acc is not None:
            traj.rows.append(acc.step(rep))
        if callback is not None:
            callback(state, rep)
    return traj

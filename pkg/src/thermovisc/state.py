"""Time-level state, step configuration and problem description."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .constitutive import DissipationModel, HeatModel, MaterialModel, thermal_energy
from .grid_ops import Grid, boundary_patches, flat, unflat

Gravity = Union[tuple, np.ndarray, Callable[[float, np.ndarray], np.ndarray]]
VelocityField = Callable[[float, np.ndarray], np.ndarray]

ADVECTION_MODES = ("central", "upwind")
SOLVER_MODES = ("monolithic", "picard")


class EvaluationError(ValueError):
    """Residual requested at a state with non-positive density or temperature."""


@dataclass(frozen=True, eq=False)
class State:
    """One time level ``(rho, v, E, theta)`` at time ``t``."""

    rho: np.ndarray
    v: np.ndarray
    E: np.ndarray
    theta: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("rho", "v", "E", "theta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.rho.shape[0]
        if self.v.shape != (n, 3) or self.E.shape != (n, 6) or self.theta.shape != (n,):
            raise ValueError("inconsistent field shapes")

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    @property
    def momentum(self) -> np.ndarray:
        return self.rho[:, None] * self.v

    def thermal(self, material: MaterialModel) -> np.ndarray:
        return thermal_energy(material, self.theta)

    def pack(self) -> np.ndarray:
        """Unknown vector in field-major order ``[rho, v_x, v_y, v_z, E_1..E_6, theta]``."""
        return np.concatenate([self.rho, flat(self.v), flat(self.E), self.theta])

    @classmethod
    def unpack(cls, x: np.ndarray, n: int, t: float) -> "State":
        return cls(x[:n], unflat(x[n:4 * n], 3), unflat(x[4 * n:10 * n], 6), x[10 * n:], t)

    def with_time(self, t: float) -> "State":
        return replace(self, t=t)

    def is_valid(self) -> bool:
        return bool(np.all(self.rho > 0) and np.all(self.theta > 0)
                    and all(np.all(np.isfinite(a)) for a in (self.rho, self.v, self.E, self.theta)))


@dataclass(frozen=True)
class StepConfig:
    """Time step, Newton controls and the optional stabilizers.

    ``delta``/``r``: density diffusion; ``eps_v``/``p_v``: velocity damping;
    ``eps_s``/``s``: strain diffusion.  All stabilizers are off by default.
    """

    tau: float = 0.1
    tol_newton: float = 1e-10
    max_newton: int = 25
    max_halvings: int = 10
    delta: float = 0.0
    r: float = 4.0
    eps_v: float = 0.0
    p_v: float = 4.0
    eps_s: float = 0.0
    s: float = 4.0
    advection: str = "central"
    lam: float = 1.0
    mode: str = "monolithic"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("time step tau must be positive")
        if not self.tol_newton > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_newton < 1 or self.max_halvings < 0:
            raise ValueError("iteration caps must be positive")
        if self.delta < 0 or self.eps_v < 0 or self.eps_s < 0:
            raise ValueError("stabilizer weights must be >= 0")
        if self.delta > 0 and not self.r > 3:
            raise ValueError("density diffusion requires r > 3")
        if self.eps_s > 0 and not self.s > 3:
            raise ValueError("strain diffusion requires s > 3")
        if self.eps_v > 0 and not self.p_v > 3:
            raise ValueError("velocity damping requires p_v > 3")
        if self.advection not in ADVECTION_MODES:
            raise ValueError(f"advection must be one of {ADVECTION_MODES}")
        if self.mode not in SOLVER_MODES:
            raise ValueError(f"mode must be one of {SOLVER_MODES}")


@dataclass(frozen=True)
class Problem:
    """Everything except the time step: grid, laws and loading.

    ``gravity`` is a constant vector or ``(t, x) -> (N, 3)``.  When
    ``prescribed_velocity`` is given the momentum equation is replaced by
    ``v = prescribed_velocity(t, x)`` (kinematic driving).
    """

    grid: Grid
    material: MaterialModel
    dissipation: DissipationModel = field(default_factory=DissipationModel)
    heat: HeatModel = field(default_factory=HeatModel)
    gravity: Gravity = (0.0, 0.0, 0.0)
    prescribed_velocity: Optional[VelocityField] = None

    def gravity_at(self, t: float) -> np.ndarray:
        x = self.grid.centers
        if callable(self.gravity):
            return np.broadcast_to(np.asarray(self.gravity(t, x), dtype=float), x.shape).copy()
        return np.broadcast_to(np.asarray(self.gravity, dtype=float), x.shape).copy()

    @property
    def unforced(self) -> bool:
        g_zero = (not callable(self.gravity)) and not np.any(np.asarray(self.gravity, dtype=float))
        src_zero = (not callable(self.heat.source)) and self.heat.source == 0
        return g_zero and src_zero and self.prescribed_velocity is None


@dataclass(frozen=True, eq=False)
class Forcing:
    """Loads averaged over one time interval."""

    gravity: np.ndarray
    h_ext: dict
    source: np.ndarray
    velocity: Optional[np.ndarray]


def _simpson(f, t0: float, t1: float):
    return (f(t0) + 4.0 * f(0.5 * (t0 + t1)) + f(t1)) / 6.0


def interval_forcing(problem: Problem, t0: float, t1: float) -> Forcing:
    grid = problem.grid
    x = grid.centers
    hm = problem.heat
    g = _simpson(problem.gravity_at, t0, t1)
    h_ext = {}
    for patch in boundary_patches(grid):
        xc = patch.centers(grid)
        h_ext[patch.face] = _simpson(lambda t: hm.external_flux(t, xc, patch.face), t0, t1)
    src = _simpson(lambda t: hm.bulk_source(t, x), t0, t1)
    vel = None
    if problem.prescribed_velocity is not None:
        vel = np.asarray(problem.prescribed_velocity(t1, x), dtype=float)
    return Forcing(g, h_ext, src, vel)


def uniform_state(grid: Grid, rho: float = 1.0, theta: float = 1.0,
                  E: Optional[np.ndarray] = None, t: float = 0.0) -> State:
    n = grid.n
    E6 = np.zeros((n, 6)) if E is None else np.broadcast_to(np.asarray(E, dtype=float), (n, 6))
    return State(np.full(n, rho), np.zeros((n, 3)), E6, np.full(n, theta), t)


__all__ = ["State", "StepConfig", "Problem", "Forcing", "EvaluationError",
           "interval_forcing", "uniform_state"]

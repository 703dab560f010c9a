"""Per-step ledgers: mass, energies, the mechanical and total energy
balances, the lambda-entropy production and the norm monitors.

Every balance is evaluated with the operators used by the residual, so the
identities hold up to the Newton tolerance and the convexity gaps of the
implicit scheme.  Sign conventions:

* ``slack_mech >= 0``: mechanical energy decreased at least by dissipation;
* ``slack_total <= 0``: total energy grew at most by the external supply;
* ``entropy_prod >= 0``; ``slack_entropy >= 0``: the lambda-entropy grew at
  least by its budget (concavity of the entropy in the thermal energy).

Columns ending in ``_power`` are rates averaged over the global step;
``diss``, ``bnd_in``, ``bnd_out`` and ``entropy_prod`` are integrated over it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from . import constitutive as cm
from . import tensor_kernel as tk
from .assembly import Fluxes, assemble
from .grid_ops import boundary_patches, gradient, integrate, operators
from .state import Problem, State, StepConfig, interval_forcing

CSV_COLUMNS = ("t", "mass", "E_kin", "E_stored", "E_therm", "diss", "grav_power",
               "adiab_power", "bnd_in", "bnd_out", "entropy", "entropy_prod", "min_rho",
               "min_theta", "slack_mech", "slack_total")
MONITOR_COLUMNS = ("max_sigma", "p_over_sqrt_rho_L2", "E_L2", "E_max", "theta_L1pa",
                   "eps_v_L2_int", "hess_v_Lp_int", "grad_theta_Lmu_int", "grad_rho_Lr",
                   "grad_E_Ls", "slack_entropy", "mass_drift", "newton_iters", "substeps")


@dataclass(frozen=True)
class LedgerRow:
    t: float
    mass: float
    E_kin: float
    E_stored: float
    E_therm: float
    diss: float
    grav_power: float
    adiab_power: float
    bnd_in: float
    bnd_out: float
    entropy: float
    entropy_prod: float
    min_rho: float
    min_theta: float
    slack_mech: float
    slack_total: float
    max_sigma: float
    p_over_sqrt_rho_L2: float
    E_L2: float
    E_max: float
    theta_L1pa: float
    eps_v_L2_int: float
    hess_v_Lp_int: float
    grad_theta_Lmu_int: float
    grad_rho_Lr: float
    grad_E_Ls: float
    slack_entropy: float
    mass_drift: float
    newton_iters: int
    substeps: int

    def values(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


assert tuple(f.name for f in fields(LedgerRow)) == CSV_COLUMNS + MONITOR_COLUMNS


@dataclass(frozen=True)
class BalanceReport:
    t: float
    mass_drift: float
    slack_mech: float
    slack_total: float
    entropy_prod: float
    slack_entropy: float
    min_rho: float
    min_theta: float
    tol_balance: float
    mass_ok: bool
    positive_ok: bool
    mech_ok: bool
    total_ok: bool
    entropy_ok: bool

    @property
    def ok(self) -> bool:
        return self.mass_ok and self.positive_ok and self.mech_ok and self.total_ok and self.entropy_ok


def balance_tolerance(cfg: StepConfig, problem: Problem) -> float:
    return max(1e-10, 10.0 * cfg.tol_newton * problem.grid.volume)


# ---------------------------------------------------------------------------
# pointwise totals


def kinetic_energy(grid, rho: np.ndarray, p: np.ndarray) -> float:
    """``int |p|^2 / (2 rho)`` from density and momentum."""
    return integrate(grid, 0.5 * np.sum(p * p, axis=1) / rho)


def stored_energy(problem: Problem, s: State) -> float:
    return integrate(problem.grid, problem.material.phi(s.E))


def thermal_total(problem: Problem, s: State) -> float:
    return integrate(problem.grid, cm.thermal_energy(problem.material, s.theta))


def mass_and_positivity(grid, cur: State) -> tuple[float, float, float, float]:
    """``(M, min rho, min theta, max sigma)`` with sparsity ``sigma = 1/rho``."""
    mn = float(np.min(cur.rho))
    return integrate(grid, cur.rho), mn, float(np.min(cur.theta)), 1.0 / mn


# ---------------------------------------------------------------------------
# step balances


@dataclass(frozen=True)
class StepTerms:
    """Integrated energy and entropy terms of one (sub)step."""

    dissipation: float       # tau * int xi  (fed to the heat equation)
    numerical: float         # tau * int (stabilizer powers), mechanical only
    gravity_work: float      # tau * int rho g . v
    adiabatic_work: float    # tau * int adiabatic power
    source_work: float       # tau * int r
    bnd_in: float            # tau * sum area h_ext
    bnd_out: float           # tau * sum area h(theta)
    d_kinetic: float
    d_stored: float
    d_thermal: float
    production: float        # tau * lambda-entropy production
    entropy_budget: float    # tau * (production - convective + heat sources weighted)
    d_entropy_lambda: float
    eps_sq: float            # tau * int |eps(v)|^2
    hess_p: float            # tau * int |grad^2 v|^p
    grad_theta_mu: float     # tau * int |grad theta|^mu

    @property
    def slack_mech(self) -> float:
        return (-(self.d_kinetic + self.d_stored) - self.dissipation - self.numerical
                + self.gravity_work - self.adiabatic_work)

    @property
    def slack_total(self) -> float:
        return (self.d_kinetic + self.d_stored + self.d_thermal + self.bnd_out
                - self.gravity_work - self.bnd_in - self.source_work)

    @property
    def slack_entropy(self) -> float:
        return self.d_entropy_lambda - self.entropy_budget


def theta_gradient_exponent(problem: Problem, lam: float) -> float:
    ok, mu = cm.admissible_exponents(problem.material.alpha, problem.heat.beta, lam)
    return mu if ok else 2.0


def step_terms(prev: State, cur: State, tau: float, cfg: StepConfig, problem: Problem,
               forcing=None, fluxes: Optional[Fluxes] = None) -> StepTerms:
    grid = problem.grid
    ops = operators(grid)
    mat, dis, hm = problem.material, problem.dissipation, problem.heat
    if forcing is None:
        forcing = interval_forcing(problem, prev.t, prev.t + tau)
    if fluxes is None:
        _, _, fluxes = assemble(prev, cur, tau, cfg, problem, forcing, jacobian=False)
    vol = grid.cell_volume
    lam = cfg.lam
    th = cur.theta

    def tint(f):
        return tau * integrate(grid, f)

    d_kin = kinetic_energy(grid, cur.rho, cur.momentum) - kinetic_energy(grid, prev.rho, prev.momentum)
    d_sto = stored_energy(problem, cur) - stored_energy(problem, prev)
    d_the = thermal_total(problem, cur) - thermal_total(problem, prev)

    bnd_in, bnd_out = [], []
    for patch in boundary_patches(grid):
        bnd_in.extend((tau * patch.area * forcing.h_ext[patch.face]).tolist())
        bnd_out.extend((tau * patch.area * cm.boundary_outflux(hm, th[patch.cells])).tolist())

    # lambda-entropy: cell part plus conductive face part
    wt = th ** (-lam)
    prod_cells = fluxes.xi * wt
    prod_faces = []
    conv = np.zeros(grid.n)
    U = cm.thermal_energy(mat, th)
    kap = cm.conductivity(hm, th)
    for a in grid.active:
        A, Dl, h = ops.face_avg(a), ops.face_diff(a), grid.spacing[a]
        flux = (A @ kap) * (Dl @ th) / h
        prod_faces.extend((-vol * flux * (Dl @ wt) / h).tolist())
        conv += ops.face_div(a) @ (A @ (U * cur.v[:, a]))
    production = tau * (vol * math.fsum(prod_cells) + math.fsum(prod_faces))
    budget = production + tint(wt * (fluxes.robin + fluxes.adiabatic + forcing.source - conv))
    d_eta = integrate(grid, cm.generalized_entropy(mat, th, lam)
                      - cm.generalized_entropy(mat, prev.theta, lam))

    mu_th = theta_gradient_exponent(problem, lam)
    gth = gradient(grid, th, bc="slip")
    return StepTerms(
        dissipation=tint(fluxes.xi),
        numerical=tint(fluxes.damping + fluxes.strain_diffusion),
        gravity_work=tint(np.sum(cur.rho[:, None] * forcing.gravity * cur.v, axis=1)),
        adiabatic_work=tint(fluxes.adiabatic),
        source_work=tint(forcing.source),
        bnd_in=math.fsum(bnd_in),
        bnd_out=math.fsum(bnd_out),
        d_kinetic=d_kin, d_stored=d_sto, d_thermal=d_the,
        production=production,
        entropy_budget=budget,
        d_entropy_lambda=d_eta,
        eps_sq=tint(tk.ddot(fluxes.eps, fluxes.eps)),
        hess_p=tint(fluxes.hess_norm ** dis.p),
        grad_theta_mu=tint(np.sum(gth * gth, axis=1) ** (mu_th / 2.0)),
    )


def mechanical_energy_check(prev: State, cur: State, cfg: StepConfig, problem: Problem,
                            tau: Optional[float] = None) -> float:
    """Signed slack of the discrete mechanical energy inequality (>= 0)."""
    tau = cur.t - prev.t if tau is None else tau
    return step_terms(prev, cur, tau, cfg, problem).slack_mech


def total_energy_check(prev: State, cur: State, cfg: StepConfig, problem: Problem,
                       tau: Optional[float] = None) -> float:
    """Signed slack of the discrete total-energy balance (<= 0)."""
    tau = cur.t - prev.t if tau is None else tau
    return step_terms(prev, cur, tau, cfg, problem).slack_total


def entropy_production_check(prev: State, cur: State, lam: float, cfg: StepConfig,
                             problem: Problem, tau: Optional[float] = None) -> tuple[float, float]:
    """``(production rate, budget slack)`` of the lambda-entropy test."""
    if not lam < 1.0 + problem.material.alpha:
        raise cm.DomainError(f"lambda = {lam} must be < 1 + alpha")
    tau = cur.t - prev.t if tau is None else tau
    st = step_terms(prev, cur, tau, replace(cfg, lam=lam), problem)
    return st.production / tau, st.slack_entropy


def norm_monitors(problem: Problem, cfg: StepConfig, cur: State) -> dict[str, float]:
    """Instantaneous a-priori norm monitors of a state."""
    grid = problem.grid
    mat = problem.material
    p = cur.momentum
    r_exp = cfg.r if cfg.delta > 0 else 2.0
    s_exp = cfg.s if cfg.eps_s > 0 else 2.0
    grho = gradient(grid, cur.rho, bc="slip")
    gE = np.stack([gradient(grid, cur.E[:, c], bc="slip") for c in range(6)], axis=1)
    gE2 = np.einsum("nca,c->n", gE ** 2, tk.VOIGT_WEIGHTS)
    return {
        "p_over_sqrt_rho_L2": math.sqrt(integrate(grid, np.sum(p * p, axis=1) / cur.rho)),
        "E_L2": math.sqrt(integrate(grid, tk.ddot(cur.E, cur.E))),
        "E_max": float(np.max(tk.norm(cur.E))),
        "theta_L1pa": integrate(grid, cur.theta ** (1.0 + mat.alpha)) ** (1.0 / (1.0 + mat.alpha)),
        "grad_rho_Lr": integrate(grid, np.sum(grho ** 2, axis=1) ** (r_exp / 2.0)) ** (1.0 / r_exp),
        "grad_E_Ls": integrate(grid, gE2 ** (s_exp / 2.0)) ** (1.0 / s_exp),
    }


class LedgerAccumulator:
    """Builds one :class:`LedgerRow` per global step, summing substeps."""

    def __init__(self, problem: Problem, cfg: StepConfig, initial: State):
        self.problem, self.cfg = problem, cfg
        self.mass0 = integrate(problem.grid, initial.rho)
        self.prev_mass = self.mass0
        self.eps_sq = 0.0
        self.hess_p = 0.0
        self.grad_theta_mu = 0.0
        self.mu_theta = theta_gradient_exponent(problem, cfg.lam)

    def step(self, report) -> LedgerRow:
        problem, cfg = self.problem, self.cfg
        grid = problem.grid
        terms = [step_terms(s.prev, s.cur, s.tau, cfg, problem, s.forcing, s.fluxes)
                 for s in report.substeps]
        cur = report.substeps[-1].cur
        tau = report.tau

        def tot(name):
            return math.fsum(getattr(t, name) for t in terms)

        self.eps_sq += tot("eps_sq")
        self.hess_p += tot("hess_p")
        self.grad_theta_mu += tot("grad_theta_mu")
        mass, min_rho, min_theta, max_sigma = mass_and_positivity(grid, cur)
        drift = abs(mass - self.prev_mass) / self.mass0
        self.prev_mass = mass
        mon = norm_monitors(problem, cfg, cur)
        p = problem.dissipation.p
        return LedgerRow(
            t=report.t,
            mass=mass,
            E_kin=kinetic_energy(grid, cur.rho, cur.momentum),
            E_stored=stored_energy(problem, cur),
            E_therm=thermal_total(problem, cur),
            diss=tot("dissipation"),
            grav_power=tot("gravity_work") / tau,
            adiab_power=tot("adiabatic_work") / tau,
            bnd_in=tot("bnd_in"),
            bnd_out=tot("bnd_out"),
            entropy=integrate(grid, cm.entropy(problem.material, cur.E, cur.theta)),
            entropy_prod=tot("production"),
            min_rho=min_rho,
            min_theta=min_theta,
            slack_mech=math.fsum(t.slack_mech for t in terms),
            slack_total=math.fsum(t.slack_total for t in terms),
            max_sigma=max_sigma,
            p_over_sqrt_rho_L2=mon["p_over_sqrt_rho_L2"],
            E_L2=mon["E_L2"],
            E_max=mon["E_max"],
            theta_L1pa=mon["theta_L1pa"],
            eps_v_L2_int=math.sqrt(self.eps_sq),
            hess_v_Lp_int=self.hess_p ** (1.0 / p),
            grad_theta_Lmu_int=self.grad_theta_mu ** (1.0 / self.mu_theta),
            grad_rho_Lr=mon["grad_rho_Lr"],
            grad_E_Ls=mon["grad_E_Ls"],
            slack_entropy=math.fsum(t.slack_entropy for t in terms),
            mass_drift=drift,
            newton_iters=report.iterations,
            substeps=len(report.substeps),
        )


def check_balances(rows, problem: Problem, cfg: StepConfig, mass0: float,
                   energy_closed: Optional[bool] = None) -> list[BalanceReport]:
    """Evaluate the ledger contracts row by row.  The energy balances are only
    asserted for closed runs (insulated, unforced, no kinematic driving)."""
    tol = balance_tolerance(cfg, problem)
    if energy_closed is None:
        energy_closed = problem.unforced and problem.heat.insulated
    out = []
    for row in rows:
        out.append(BalanceReport(
            t=row.t, mass_drift=row.mass_drift, slack_mech=row.slack_mech,
            slack_total=row.slack_total, entropy_prod=row.entropy_prod,
            slack_entropy=row.slack_entropy, min_rho=row.min_rho, min_theta=row.min_theta,
            tol_balance=tol,
            mass_ok=row.mass_drift <= 1e-12 and abs(row.mass - mass0) <= 1e-12 * mass0,
            positive_ok=row.min_rho > 0 and row.min_theta > 0,
            mech_ok=(not energy_closed) or row.slack_mech >= -tol,
            total_ok=(not energy_closed) or row.slack_total <= tol,
            entropy_ok=row.entropy_prod >= -1e-10,
        ))
    return out

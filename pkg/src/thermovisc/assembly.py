"""Residual and analytic Jacobian of one backward-Euler step.

All four blocks are written per unit volume and per unit time:

* mass:      (rho - rho_prev)/tau + div J,  J = avg(rho v) - (delta/tau) |d rho|^(r-2) d rho
* momentum:  (rho v - p_prev)/tau + div(J (x) avg v) - div(T + D eps) + hyper - rho g
             + (eps_v/tau) |v|^(p_v-2) v
* strain:    (E - E_prev)/tau - eps(v) + R(E, theta) + (v.grad)E + E W - W E
             - (eps_s/tau) div(|dE|^(s-2) dE)
* heat:      (U(theta) - U_prev)/tau + div(avg(U v)) - div(kappa grad theta) - robin
             - xi - adiabatic - r

Mass fluxes live on interior faces; walls carry no flux, so the mass block
sums to zero exactly.  The momentum flux reuses the mass flux (including the
density-diffusion part), which keeps the kinetic-energy identity exact.  The
stress divergence is the negative adjoint of the slip symmetric gradient and
the advection of ``E`` is written in skew-symmetric form, so testing the
scheme with ``(v, phi'(E), 1)`` reproduces the discrete energy balance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import constitutive as cm
from . import tensor_kernel as tk
from .grid_ops import boundary_patches, flat, operators, pointwise, unflat
from .sparse_pattern import PatternBuilder
from .state import EvaluationError, Forcing, Problem, State, StepConfig

BLOCKS = ("mass", "momentum", "strain", "heat")
PDEV = np.eye(6) - np.outer(tk.IDENTITY6, tk.IDENTITY6) / 3.0
BC = "slip"


def block_slices(n: int) -> dict[str, slice]:
    return {"mass": slice(0, n), "momentum": slice(n, 4 * n),
            "strain": slice(4 * n, 10 * n), "heat": slice(10 * n, 11 * n)}


def _powabs(x: np.ndarray, e: float) -> np.ndarray:
    """``|x|**e`` with ``0**e = 0`` for ``e > 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(x) ** e
    return np.where(x == 0, 0.0 if e > 0 else out, out)


@dataclass
class Fluxes:
    """Per-step intermediate quantities reused by the ledgers."""

    eps: np.ndarray          # symmetric velocity gradient (N, 6)
    divv: np.ndarray         # (N,)
    hess: np.ndarray         # unique second-gradient components (N, U)
    hess_norm: np.ndarray    # |grad^2 v| (N,)
    stress: np.ndarray       # conservative Cauchy stress (N, 6)
    creep: np.ndarray        # creep rate (N, 6)
    xi: np.ndarray           # dissipation rate fed to the heat equation (N,)
    adiabatic: np.ndarray    # (N,)
    robin: np.ndarray        # boundary heat input per unit volume (N,)
    damping: np.ndarray      # velocity-damping power per unit volume (N,)
    strain_diffusion: np.ndarray  # power of the strain-diffusion term (N,)
    mass_flux: dict          # axis -> face mass flux


def assemble(prev: State, cur: State, tau: float, cfg: StepConfig, problem: Problem,
             forcing: Forcing, jacobian: bool = True, engine: str = "pattern"):
    """Return ``(residual, jacobian or None, fluxes)`` at ``cur``.

    ``engine="products"`` assembles the Jacobian by explicit sparse products
    instead of the cached pattern; both give the same matrix.
    """
    if np.any(cur.rho <= 0) or np.any(cur.theta <= 0):
        raise EvaluationError("non-positive density or temperature")
    if not (np.all(np.isfinite(cur.rho)) and np.all(np.isfinite(cur.v))
            and np.all(np.isfinite(cur.E)) and np.all(np.isfinite(cur.theta))):
        raise EvaluationError("non-finite state")

    grid = problem.grid
    ops = operators(grid)
    N = grid.n
    mat, dis, hm = problem.material, problem.dissipation, problem.heat
    rho, v, E, th = cur.rho, cur.v, cur.E, cur.theta
    vflat = flat(v)
    diag = sp.diags

    Eps = ops.eps(BC)
    DivV = ops.divv(BC)
    Wop = ops.spin(BC)
    Sdiv = ops.stress_div()
    Hess = ops.hessian(BC)
    mult = ops.hessian_multiplicity(BC)
    nU = len(mult)

    eps = unflat(Eps @ vflat, 6)
    divv = DivV @ vflat
    w = unflat(Wop @ vflat, 3)

    # ---------------------------------------------------------------- mass
    J = {}
    R_rho = (rho - prev.rho) / tau
    for a in grid.active:
        A, Dl, h = ops.face_avg(a), ops.face_diff(a), grid.spacing[a]
        Ja = A @ (rho * v[:, a])
        if cfg.delta > 0:
            g = Dl @ rho / h
            Ja = Ja - cfg.delta / tau * _powabs(g, cfg.r - 2.0) * g
        J[a] = Ja
        R_rho = R_rho + ops.face_div(a) @ Ja

    # ---------------------------------------------------------- constitutive
    T = cm.cauchy_stress(mat, E, th)
    dT_dE, dT_dth = cm.stress_jacobians(mat, E, th) if jacobian else (None, None)
    Sdev = tk.dev(T)
    Rc = dis.creep.rate(th, Sdev)
    Dm = dis.viscosity_matrix
    visc = eps @ Dm.T
    S = T + visc

    Hu = unflat(Hess @ vflat, nU) if nU else np.zeros((N, 0))
    nrm2 = Hu ** 2 @ mult if nU else np.zeros(N)
    nrm = np.sqrt(nrm2)
    hyper_on = dis.mu > 0 and nU > 0
    if hyper_on:
        hp2 = _powabs(nrm, dis.p - 2.0)
        flux_h = dis.mu * hp2[:, None] * Hu
        hyper_power = dis.mu * _powabs(nrm, dis.p)
    else:
        hyper_power = np.zeros(N)

    # ------------------------------------------------------------ momentum
    prescribed = forcing.velocity is not None
    vnorm = np.sqrt(np.sum(v * v, axis=1))
    damping_power = np.zeros(N)
    if prescribed:
        R_v = v - forcing.velocity
    else:
        R_v = (rho[:, None] * v - prev.momentum) / tau
        for a in grid.active:
            A = ops.face_avg(a)
            vbar = A @ v
            R_v = R_v + ops.face_div(a) @ (J[a][:, None] * vbar)
        R_v = R_v - unflat(Sdiv @ flat(S), 3)
        if hyper_on:
            R_v = R_v + unflat(Hess.T @ flat(flux_h * mult), 3)
        R_v = R_v - rho[:, None] * forcing.gravity
        if cfg.eps_v > 0:
            R_v = R_v + cfg.eps_v / tau * _powabs(vnorm, cfg.p_v - 2.0)[:, None] * v
            damping_power = cfg.eps_v / tau * _powabs(vnorm, cfg.p_v)

    # -------------------------------------------------------------- strain
    spin = tk.jaumann_spin_term(tk.skew_from_components(w), E, check=False)
    adv = np.zeros((N, 6))
    if cfg.advection == "central":
        for a in grid.active:
            De = ops.d1(a, "even")
            adv += 0.5 * v[:, a][:, None] * (De @ E) - 0.5 * (De.T @ (v[:, a][:, None] * E))
        adv -= 0.5 * E * divv[:, None]
    else:
        up = {}
        for a in grid.active:
            pos = v[:, a] >= 0
            up[a] = (diag(pos.astype(float)) @ ops.one_sided(a, False)
                     + diag((~pos).astype(float)) @ ops.one_sided(a, True)).tocsr()
            adv += v[:, a][:, None] * (up[a] @ E)
    R_E = (E - prev.E) / tau - eps + Rc + adv + spin
    sdiff_power = np.zeros(N)
    if cfg.eps_s > 0:
        for a in grid.active:
            Dl, h = ops.face_diff(a), grid.spacing[a]
            gE = Dl @ E / h
            gn = np.sqrt(gE ** 2 @ tk.VOIGT_WEIGHTS)
            Q = _powabs(gn, cfg.s - 2.0)[:, None] * gE
            term = -cfg.eps_s / tau * (ops.face_div(a) @ Q)
            R_E = R_E + term
            sdiff_power = sdiff_power + tk.ddot(mat.dphi(E), term)

    # ---------------------------------------------------------------- heat
    U = cm.thermal_energy(mat, th)
    U_prev = cm.thermal_energy(mat, prev.theta)
    kap = cm.conductivity(hm, th)
    R_th = (U - U_prev) / tau
    for a in grid.active:
        A, Dl, h = ops.face_avg(a), ops.face_diff(a), grid.spacing[a]
        R_th = R_th + ops.face_div(a) @ (A @ (U * v[:, a]))
        R_th = R_th - ops.face_div(a) @ ((A @ kap) * (Dl @ th) / h)
    bfac = ops.boundary_factor()
    robin = np.zeros(N)
    for patch in boundary_patches(grid):
        ext = forcing.h_ext[patch.face]
        np.add.at(robin, patch.cells,
                  (ext - cm.boundary_outflux(hm, th[patch.cells])) * patch.area / grid.cell_volume)
    xi_creep = tk.ddot(Sdev, Rc)
    xi = tk.ddot(eps, visc) + xi_creep + hyper_power
    trE = tk.trace(E)
    acoef = th * mat.dcoupling(trE) + th * mat.coupling(trE) + mat.gamma(th)
    adiab = acoef * divv
    R_th = R_th - robin - xi - adiab - forcing.source

    residual = np.concatenate([R_rho, flat(R_v), flat(R_E), R_th])

    fluxes = Fluxes(eps, divv, Hu, nrm, T, Rc, xi, adiab, robin, damping_power,
                    sdiff_power, J)

    if not jacobian:
        return residual, None, fluxes

    # ============================================================ Jacobian
    dRdS = dis.creep.d_rate_dS(th)
    dS_dE = np.einsum("ab,nbc->nac", PDEV, dT_dE)
    dS_dth = dT_dth @ PDEV.T
    dRc_dE = np.einsum("nab,nbc->nac", dRdS, dS_dE)
    dRc_dth = np.einsum("nab,nb->na", dRdS, dS_dth) + dis.creep.d_rate_dtheta(th, Sdev)
    spin_dE, spin_dW = tk.spin_jacobians(w, E)
    c_th = cm.heat_capacity(mat, th)
    dkap = cm.dconductivity(hm, th)
    wR = tk.VOIGT_WEIGHTS * Rc
    wS = tk.VOIGT_WEIGHTS * Sdev
    dxi_dE = np.einsum("na,nab->nb", wR, dS_dE) + np.einsum("na,nab->nb", wS, dRc_dE)
    dxi_dth = np.einsum("na,na->n", wR, dS_dth) + np.einsum("na,na->n", wS, dRc_dth)
    dacoef_dth = mat.dcoupling(trE) + mat.coupling(trE) + mat.dgamma(th)
    dacoef_dtr = th * mat.d2coupling(trE) + th * mat.dcoupling(trE)
    q = {}
    if cfg.delta > 0:
        for a in grid.active:
            g = ops.face_diff(a) @ rho / grid.spacing[a]
            q[a] = -cfg.delta / tau * (cfg.r - 1.0) * _powabs(g, cfg.r - 2.0)
    Mh = Md = None
    if not prescribed and hyper_on:
        hp4 = _powabs(nrm, dis.p - 4.0)
        Mh = dis.mu * (hp2[:, None, None] * np.eye(nU)
                       + (dis.p - 2.0) * hp4[:, None, None] * Hu[:, :, None] * (mult * Hu)[:, None, :])
        Mh = mult[None, :, None] * Mh
    if not prescribed and cfg.eps_v > 0:
        vp2 = _powabs(vnorm, cfg.p_v - 2.0)
        vp4 = _powabs(vnorm, cfg.p_v - 4.0)
        Md = cfg.eps_v / tau * (vp2[:, None, None] * np.eye(3)
                                + (cfg.p_v - 2.0) * vp4[:, None, None] * v[:, :, None] * v[:, None, :])
    dQ = {}
    if cfg.eps_s > 0:
        for a in grid.active:
            gE = ops.face_diff(a) @ E / grid.spacing[a]
            gn = np.sqrt(gE ** 2 @ tk.VOIGT_WEIGHTS)
            dQ[a] = (_powabs(gn, cfg.s - 2.0)[:, None, None] * np.eye(6)
                     + (cfg.s - 2.0) * _powabs(gn, cfg.s - 4.0)[:, None, None]
                     * gE[:, :, None] * (tk.VOIGT_WEIGHTS * gE)[:, None, :])
    jd = _JacobianData(N, tau, rho, v, E, th, forcing, J, q, Mh, Md, dT_dE, dT_dth, dRc_dE,
                       dRc_dth, spin_dE, spin_dW, divv, up if cfg.advection == "upwind" else None,
                       dQ, c_th, kap, dkap, U, bfac, hm, visc, hp2 if hyper_on else None, Hu,
                       mult, dxi_dE, dxi_dth, acoef, dacoef_dth, dacoef_dtr, prescribed, hyper_on)
    if engine == "products":
        jac = _jacobian_products(jd, cfg, grid, ops, dis)
    else:
        jac = _jacobian_pattern(jd, cfg, grid, ops, dis)
    return residual, jac, fluxes


@dataclass
class _JacobianData:
    N: int
    tau: float
    rho: np.ndarray
    v: np.ndarray
    E: np.ndarray
    th: np.ndarray
    forcing: Forcing
    J: dict
    q: dict
    Mh: object
    Md: object
    dT_dE: np.ndarray
    dT_dth: np.ndarray
    dRc_dE: np.ndarray
    dRc_dth: np.ndarray
    spin_dE: np.ndarray
    spin_dW: np.ndarray
    divv: np.ndarray
    up: object
    dQ: dict
    c_th: np.ndarray
    kap: np.ndarray
    dkap: np.ndarray
    U: np.ndarray
    bfac: np.ndarray
    hm: object
    visc: np.ndarray
    hp2: object
    Hu: np.ndarray
    mult: np.ndarray
    dxi_dE: np.ndarray
    dxi_dth: np.ndarray
    acoef: np.ndarray
    dacoef_dth: np.ndarray
    dacoef_dtr: np.ndarray
    prescribed: bool
    hyper_on: bool


def _spread(n: int, a: int, b: int):
    """Factors ``P``, ``Q`` with ``pointwise(M) = P diag(m) Q`` where
    ``m = M.transpose(1, 2, 0).ravel()``."""
    k = np.arange(a * b * n)
    i, j, c = k // (b * n), (k // n) % b, k % n
    ones = np.ones(k.size)
    P = sp.csr_matrix((ones, (i * n + c, k)), shape=(a * n, k.size))
    Q = sp.csr_matrix((ones, (k, j * n + c)), shape=(k.size, b * n))
    return P, Q


def _pw(M: np.ndarray) -> np.ndarray:
    return np.transpose(M, (1, 2, 0)).ravel()


def _jacobian_pattern(d: _JacobianData, cfg: StepConfig, grid, ops, dis) -> sp.csc_matrix:
    N, tau, v = d.N, d.tau, d.v
    n11 = 11 * N
    sig = (cfg.advection, cfg.delta > 0, cfg.eps_v > 0, cfg.eps_s > 0, d.prescribed, d.hyper_on)
    B = PatternBuilder((n11, n11), ops.pattern_cache, sig)
    I = lambda m: sp.identity(m, format="csr")
    Fd, A, Dl = ops.face_div, ops.face_avg, ops.face_diff
    h = grid.spacing
    rV = [N + i * N for i in range(3)]
    rE, rT = 4 * N, 10 * N

    # mass
    B.add(("I", N), 0, 0, lambda: (I(N), I(N)), np.full(N, 1.0 / tau))
    for a in grid.active:
        B.add(("FdA", a), 0, 0, lambda a=a: (Fd(a) @ A(a), I(N)), v[:, a])
        if cfg.delta > 0:
            B.add(("FdD", a), 0, 0, lambda a=a: (Fd(a), Dl(a) / h[a]), d.q[a])
        B.add(("FdA", a), 0, rV[a], lambda a=a: (Fd(a) @ A(a), I(N)), d.rho)

    # momentum
    if d.prescribed:
        B.add(("I", 3 * N), N, N, lambda: (I(3 * N), I(3 * N)), np.ones(3 * N))
    else:
        for i in range(3):
            B.add(("I", N), rV[i], 0, lambda: (I(N), I(N)), v[:, i] / tau - d.forcing.gravity[:, i])
            B.add(("I", N), rV[i], rV[i], lambda: (I(N), I(N)), d.rho / tau)
            for a in grid.active:
                vbar = A(a) @ v[:, i]
                mk = lambda a=a: (Fd(a), A(a))
                B.add(("Fd|A", a), rV[i], 0, mk, vbar, v[:, a])
                if cfg.delta > 0:
                    B.add(("FdD", a), rV[i], 0, lambda a=a: (Fd(a), Dl(a) / h[a]), vbar * d.q[a])
                B.add(("Fd|A", a), rV[i], rV[a], mk, vbar, d.rho)
                B.add(("Fd|A", a), rV[i], rV[i], mk, d.J[a])
        Dm = dis.viscosity_matrix
        B.add(("visc", Dm.tobytes()), N, N,
              lambda: (ops.stress_div() @ sp.kron(Dm, I(N)) @ ops.eps(BC), I(3 * N)),
              -np.ones(3 * N))
        if d.hyper_on:
            nU = len(d.mult)

            def mk_h():
                P, Q = _spread(N, nU, nU)
                H = ops.hessian(BC)
                return H.T @ P, Q @ H
            B.add(("hess",), N, N, mk_h, _pw(d.Mh))
        if cfg.eps_v > 0:
            B.add(("pw", 3, 3), N, N, lambda: _spread(N, 3, 3), _pw(d.Md))

        def mk_s(b):
            P, Q = _spread(N, 6, b)
            return ops.stress_div() @ P, Q
        B.add(("Spw", 6), N, rE, lambda: mk_s(6), -_pw(d.dT_dE))
        B.add(("Spw", 1), N, rT, lambda: mk_s(1), -_pw(d.dT_dth[:, :, None]))

    # strain
    Mee = d.dRc_dE + d.spin_dE + np.eye(6) / tau
    if cfg.advection == "central":
        Mee = Mee - 0.5 * d.divv[:, None, None] * np.eye(6)
    B.add(("pw", 6, 6), rE, rE, lambda: _spread(N, 6, 6), _pw(Mee))
    B.add(("Eps",), rE, N, lambda: (ops.eps(BC), I(3 * N)), -np.ones(6 * N))
    B.add(("pwW",), rE, N, lambda: (lambda P, Q: (P, Q @ ops.spin(BC)))(*_spread(N, 6, 3)),
          _pw(d.spin_dW))
    I6 = I(6)
    stackI = lambda: (I(6 * N), sp.vstack([I(N)] * 6, format="csr"))
    if cfg.advection == "central":
        B.add(("EDiv",), rE, N, lambda: (I(6 * N), sp.vstack([ops.divv(BC)] * 6, format="csr")),
              -0.5 * flat(d.E))
        for a in grid.active:
            De = lambda a=a: ops.d1(a, "even")
            B.add(("kDe", a), rE, rE, lambda De=De: (I(6 * N), sp.kron(I6, De(), format="csr")),
                  np.tile(0.5 * v[:, a], 6))
            B.add(("kDeT", a), rE, rE, lambda De=De: (sp.kron(I6, De().T, format="csr"), I(6 * N)),
                  np.tile(-0.5 * v[:, a], 6))
            B.add(("stackI",), rE, rV[a], stackI, 0.5 * flat(ops.d1(a, "even") @ d.E))
            B.add(("kDeTs", a), rE, rV[a],
                  lambda De=De: (sp.kron(I6, De().T, format="csr"), sp.vstack([I(N)] * 6, format="csr")),
                  -0.5 * flat(d.E))
    else:
        for a in grid.active:
            pos = (v[:, a] >= 0).astype(float)
            for fwd, sel in ((False, pos), (True, 1.0 - pos)):
                B.add(("kOne", a, fwd), rE, rE,
                      lambda a=a, fwd=fwd: (I(6 * N), sp.kron(I6, ops.one_sided(a, fwd), format="csr")),
                      np.tile(sel * v[:, a], 6))
            B.add(("stackI",), rE, rV[a], stackI, flat(d.up[a] @ d.E))
    if cfg.eps_s > 0:
        for a in grid.active:
            F = Dl(a).shape[0]

            def mk_sd(a=a, F=F):
                P, Q = _spread(F, 6, 6)
                return (sp.kron(I6, Fd(a), format="csr") @ P,
                        Q @ sp.kron(I6, Dl(a) / h[a], format="csr"))
            B.add(("sd", a), rE, rE, mk_sd, -cfg.eps_s / tau * _pw(d.dQ[a]))
    B.add(("pw", 6, 1), rE, rT, lambda: _spread(N, 6, 1), _pw(d.dRc_dth[:, :, None]))

    # heat
    diag_t = (d.c_th / tau + cm.dboundary_outflux(d.hm, d.th) * d.bfac
              - d.dxi_dth - d.dacoef_dth * d.divv)
    B.add(("I", N), rT, rT, lambda: (I(N), I(N)), diag_t)
    for a in grid.active:
        B.add(("FdA", a), rT, rT, lambda a=a: (Fd(a) @ A(a), I(N)), d.c_th * v[:, a])
        B.add(("FdD", a), rT, rT, lambda a=a: (Fd(a), Dl(a) / h[a]), -(A(a) @ d.kap))
        B.add(("Fd|A", a), rT, rT, lambda a=a: (Fd(a), A(a)), -(Dl(a) @ d.th) / h[a], d.dkap)
        B.add(("FdA", a), rT, rV[a], lambda a=a: (Fd(a) @ A(a), I(N)), d.U)
    B.add(("pwEps",), rT, N, lambda: (lambda P, Q: (P, Q @ ops.eps(BC)))(*_spread(N, 1, 6)),
          -_pw((2.0 * tk.VOIGT_WEIGHTS * d.visc)[:, None, :]))
    if d.hyper_on:
        B.add(("pwHess",), rT, N,
              lambda: (lambda P, Q: (P, Q @ ops.hessian(BC)))(*_spread(N, 1, len(d.mult))),
              -_pw((dis.p * dis.mu * d.hp2[:, None] * d.mult * d.Hu)[:, None, :]))
    B.add(("Div",), rT, N, lambda: (I(N), ops.divv(BC)), -d.acoef)
    B.add(("pw", 1, 6), rT, rE, lambda: _spread(N, 1, 6),
          -_pw((d.dxi_dE + (d.dacoef_dtr * d.divv)[:, None] * tk.IDENTITY6)[:, None, :]))
    return B.build()


def _jacobian_products(d: _JacobianData, cfg: StepConfig, grid, ops, dis) -> sp.csc_matrix:
    """Reference assembly by explicit sparse products (slow, used in tests)."""
    N, tau, v, rho, E = d.N, d.tau, d.v, d.rho, d.E
    diag = sp.diags
    I_N = sp.identity(N, format="csr")
    Eps, DivV, Wop, Sdiv = ops.eps(BC), ops.divv(BC), ops.spin(BC), ops.stress_div()
    Hess = ops.hessian(BC)
    dJ_drho, dJ_dv = {}, {}
    for a in grid.active:
        A, Dl, h = ops.face_avg(a), ops.face_diff(a), grid.spacing[a]
        dJ_drho[a] = A @ diag(v[:, a])
        if cfg.delta > 0:
            dJ_drho[a] = dJ_drho[a] + diag(d.q[a]) @ Dl / h
        dJ_dv[a] = A @ diag(rho)
    J_rr = I_N / tau
    J_rv = [sp.csr_matrix((N, N)) for _ in range(3)]
    for a in grid.active:
        Fd = ops.face_div(a)
        J_rr = J_rr + Fd @ dJ_drho[a]
        J_rv[a] = J_rv[a] + Fd @ dJ_dv[a]
    J_rv = sp.hstack(J_rv)

    if d.prescribed:
        J_vr, J_vv, J_vE, J_vt = None, sp.identity(3 * N, format="csr"), None, None
    else:
        rows_r = []
        blocks = [[sp.csr_matrix((N, N)) for _ in range(3)] for _ in range(3)]
        for i in range(3):
            Jr = diag(v[:, i] / tau) - diag(d.forcing.gravity[:, i])
            blocks[i][i] = blocks[i][i] + diag(rho / tau)
            for a in grid.active:
                A, Fd = ops.face_avg(a), ops.face_div(a)
                vbar_i = A @ v[:, i]
                Jr = Jr + Fd @ diag(vbar_i) @ dJ_drho[a]
                blocks[i][a] = blocks[i][a] + Fd @ diag(vbar_i) @ dJ_dv[a]
                blocks[i][i] = blocks[i][i] + Fd @ diag(d.J[a]) @ A
            rows_r.append(Jr)
        J_vr = sp.vstack(rows_r)
        J_vv = sp.bmat(blocks) - Sdiv @ sp.kron(dis.viscosity_matrix, I_N) @ Eps
        if d.hyper_on:
            J_vv = J_vv + Hess.T @ pointwise(d.Mh) @ Hess
        if cfg.eps_v > 0:
            J_vv = J_vv + pointwise(d.Md)
        J_vE = -Sdiv @ pointwise(d.dT_dE)
        J_vt = -Sdiv @ pointwise(d.dT_dth[:, :, None])

    J_EE = sp.identity(6 * N, format="csr") / tau + pointwise(d.dRc_dE) + pointwise(d.spin_dE)
    J_Ev = -Eps + pointwise(d.spin_dW) @ Wop
    I6 = sp.identity(6, format="csr")
    if cfg.advection == "central":
        Bm = -0.5 * diag(d.divv)
        adv_v = []
        for a in grid.active:
            De = ops.d1(a, "even")
            Bm = Bm + 0.5 * (diag(v[:, a]) @ De - De.T @ diag(v[:, a]))
        for c in range(6):
            row = -0.5 * diag(E[:, c]) @ DivV
            parts = [sp.csr_matrix((N, N)) for _ in range(3)]
            for a in grid.active:
                De = ops.d1(a, "even")
                parts[a] = 0.5 * (diag(De @ E[:, c]) - De.T @ diag(E[:, c]))
            adv_v.append(row + sp.hstack(parts))
        J_EE = J_EE + sp.kron(I6, Bm)
        J_Ev = J_Ev + sp.vstack(adv_v)
    else:
        Bm = sp.csr_matrix((N, N))
        for a in grid.active:
            Bm = Bm + diag(v[:, a]) @ d.up[a]
        J_EE = J_EE + sp.kron(I6, Bm)
        rows = []
        for c in range(6):
            parts = [sp.csr_matrix((N, N)) for _ in range(3)]
            for a in grid.active:
                parts[a] = diag(d.up[a] @ E[:, c])
            rows.append(sp.hstack(parts))
        J_Ev = J_Ev + sp.vstack(rows)
    if cfg.eps_s > 0:
        for a in grid.active:
            Dl, h, Fd = ops.face_diff(a), grid.spacing[a], ops.face_div(a)
            J_EE = J_EE - cfg.eps_s / tau * sp.kron(I6, Fd) @ pointwise(d.dQ[a]) @ sp.kron(I6, Dl / h)
    J_Et = pointwise(d.dRc_dth[:, :, None])

    J_tt = diag(d.c_th / tau)
    J_tv = [sp.csr_matrix((N, N)) for _ in range(3)]
    for a in grid.active:
        A, Dl, h, Fd = ops.face_avg(a), ops.face_diff(a), grid.spacing[a], ops.face_div(a)
        J_tt = J_tt + Fd @ A @ diag(d.c_th * v[:, a])
        J_tt = J_tt - Fd @ (diag(A @ d.kap) @ Dl / h + diag(Dl @ d.th / h) @ A @ diag(d.dkap))
        J_tv[a] = J_tv[a] + Fd @ A @ diag(d.U)
    J_tt = J_tt + diag(cm.dboundary_outflux(d.hm, d.th) * d.bfac)
    J_tt = J_tt - diag(d.dxi_dth + d.dacoef_dth * d.divv)
    dxi_dv = pointwise((2.0 * tk.VOIGT_WEIGHTS * d.visc)[:, None, :]) @ Eps
    if d.hyper_on:
        dxi_dv = dxi_dv + pointwise((dis.p * dis.mu * d.hp2[:, None] * d.mult * d.Hu)[:, None, :]) @ Hess
    J_tv = sp.hstack(J_tv) - dxi_dv - diag(d.acoef) @ DivV
    J_tE = -pointwise(d.dxi_dE[:, None, :]) - pointwise(
        (d.dacoef_dtr * d.divv)[:, None, None] * tk.IDENTITY6[None, None, :])

    return sp.bmat([
        [J_rr, J_rv, None, None],
        [J_vr, J_vv, J_vE, J_vt],
        [None, J_Ev, J_EE, J_Et],
        [None, J_tv, J_tE, J_tt],
    ], format="csc")


def residual_blocks(residual: np.ndarray, n: int) -> dict[str, np.ndarray]:
    return {k: residual[s] for k, s in block_slices(n).items()}

import numpy as np
import pytest
from conftest import busy_problem, random_state

from thermovisc import constitutive as cm
from thermovisc import tensor_kernel as tk
from thermovisc.assembly import assemble, block_slices, residual_blocks
from thermovisc.grid_ops import Grid, boundary_patches
from thermovisc.state import (EvaluationError, Problem, State, StepConfig, interval_forcing,
                              uniform_state)

TAU = 0.05
GRID = Grid((4, 4, 1))


# --------------------------------------------------------------------------
# independent reference: explicit ghost-cell stencils on the (nx, ny) array


def _pad_diff(f, axis, h, parity):
    """Central difference along ``axis`` with mirror ghosts of given parity."""
    n = f.shape[axis]
    if n == 1:
        return np.zeros_like(f)
    lo = parity * np.take(f, [0], axis=axis)
    hi = parity * np.take(f, [n - 1], axis=axis)
    g = np.concatenate([lo, f, hi], axis=axis)
    return (np.take(g, range(2, n + 2), axis=axis) - np.take(g, range(0, n), axis=axis)) / (2 * h)


def _vel_grad(grid, v):
    V = grid.reshape(v)
    L = np.zeros(grid.shape + (3, 3))
    for i in range(3):
        for j in range(3):
            L[..., i, j] = _pad_diff(V[..., i], j, grid.spacing[j], -1.0 if i == j else 1.0)
    return L.reshape(-1, 3, 3)


def _face_div(grid, F, axis):
    """Cell divergence of interior face fluxes ``F`` (n-1 faces), zero at walls."""
    shape = list(F.shape)
    shape[axis] = 1
    z = np.zeros(shape)
    Fp = np.concatenate([z, F, z], axis=axis)
    n = F.shape[axis] + 1
    return (np.take(Fp, range(1, n + 1), axis=axis) - np.take(Fp, range(0, n), axis=axis)) / grid.spacing[axis]


def _avg(f, axis):
    n = f.shape[axis]
    return 0.5 * (np.take(f, range(0, n - 1), axis=axis) + np.take(f, range(1, n), axis=axis))


def _diff(f, axis):
    n = f.shape[axis]
    return np.take(f, range(1, n), axis=axis) - np.take(f, range(0, n - 1), axis=axis)


def _eps_matrix(grid):
    """Dense (6N x 3N) reference symmetric gradient, column by column."""
    n = grid.n
    M = np.zeros((6 * n, 3 * n))
    for c in range(3 * n):
        e = np.zeros(3 * n)
        e[c] = 1.0
        L = _vel_grad(grid, e.reshape(3, n).T)
        M[:, c] = tk.from_matrix(0.5 * (L + L.transpose(0, 2, 1))).T.ravel()
    return M


def _d_even(grid, axis):
    n = grid.n
    D = np.zeros((n, n))
    for c in range(n):
        e = np.zeros(n)
        e[c] = 1.0
        D[:, c] = _pad_diff(grid.reshape(e), axis, grid.spacing[axis], 1.0).ravel()
    return D


def reference_residual(prev, cur, tau, problem):
    grid = problem.grid
    mat, dis, hm = problem.material, problem.dissipation, problem.heat
    n = grid.n
    rho, v, E, th = cur.rho, cur.v, cur.E, cur.theta
    R = grid.reshape
    L = _vel_grad(grid, v)
    eps = tk.from_matrix(0.5 * (L + L.transpose(0, 2, 1)))
    W = 0.5 * (L - L.transpose(0, 2, 1))
    divv = np.trace(L, axis1=1, axis2=2)

    # mass
    r_rho = (rho - prev.rho) / tau
    flux = {}
    for a in grid.active:
        flux[a] = _avg(R(rho * v[:, a]), a)
        r_rho = r_rho + _face_div(grid, flux[a], a).ravel()

    # momentum
    T = cm.cauchy_stress(mat, E, th)
    S = T + 2 * dis.eta_shear * tk.dev(eps) + dis.eta_bulk * divv[:, None] * tk.IDENTITY6
    r_v = (rho[:, None] * v - prev.rho[:, None] * prev.v) / tau
    for a in grid.active:
        for i in range(3):
            r_v[:, i] += _face_div(grid, flux[a] * _avg(R(v[:, i]), a), a).ravel()
    Eps = _eps_matrix(grid)
    r_v += (Eps.T @ (S * tk.VOIGT_WEIGHTS).T.ravel()).reshape(3, n).T
    r_v -= rho[:, None] * np.asarray(problem.gravity)

    # strain
    Sdev = tk.dev(T)
    creep = tk.dev(Sdev / dis.creep.modulus(th)[:, None])
    adv = -0.5 * E * divv[:, None]
    for a in grid.active:
        D = _d_even(grid, a)
        adv += 0.5 * v[:, a][:, None] * (D @ E) - 0.5 * D.T @ (v[:, a][:, None] * E)
    Em = tk.to_matrix(E)
    spin = tk.from_matrix(Em @ W - W @ Em)
    r_E = (E - prev.E) / tau - eps + creep + adv + spin

    # heat
    U = cm.thermal_energy(mat, th)
    r_th = (U - cm.thermal_energy(mat, prev.theta)) / tau
    kap = hm.kappa0 * (1 + th ** hm.beta)
    for a in grid.active:
        h = grid.spacing[a]
        r_th = r_th + _face_div(grid, _avg(R(U * v[:, a]), a), a).ravel()
        r_th = r_th - _face_div(grid, _avg(R(kap), a) * _diff(R(th), a) / h, a).ravel()
    robin = np.zeros(n)
    for p in boundary_patches(grid):
        ext = hm.h_ext.get(p.face, 0.0)
        out = hm.a1 * th[p.cells] + hm.a2 * th[p.cells] ** 4
        robin[p.cells] += (ext - out) * p.area / grid.cell_volume
    visc = 2 * dis.eta_shear * tk.dev(eps) + dis.eta_bulk * divv[:, None] * tk.IDENTITY6
    xi = tk.ddot(visc, eps) + tk.ddot(Sdev, creep)
    trE = tk.trace(E)
    adiab = (th * mat.dcoupling(trE) + th * mat.coupling(trE) + mat.gamma(th)) * divv
    r_th = r_th - robin - xi - adiab - hm.source
    return np.concatenate([r_rho, r_v.T.ravel(), r_E.T.ravel(), r_th])


@pytest.mark.parametrize("shape", [(4, 4, 1), (4, 4, 4)])
def test_residual_matches_independent_reference(shape):
    # stabilizers and hyper-viscosity off; the hyperstress term is covered by
    # the variational checks of the grid operators
    grid = Grid(shape)
    problem = busy_problem(grid, mu=0.0)
    rng = np.random.default_rng(11)
    cfg = StepConfig(tau=TAU)
    for _ in range(2):
        prev, cur = random_state(grid, rng), random_state(grid, rng, TAU)
        res, _, _ = assemble(prev, cur, TAU, cfg, problem, interval_forcing(problem, 0, TAU),
                             jacobian=False)
        ref = reference_residual(prev, cur, TAU, problem)
        for name, sl in block_slices(grid.n).items():
            assert np.allclose(res[sl], ref[sl], rtol=1e-12, atol=1e-12), name


def test_rest_state_has_zero_residual():
    problem = Problem(GRID, cm.thermo_creep_material(1.0, 1.0, 0.3, 1.0, 1.0),
                      cm.DissipationModel(eta_shear=0.1, eta_bulk=0.1, mu=0.01,
                                          creep=cm.QuadraticCreep(2.0)))
    s = uniform_state(GRID, rho=1.3, theta=0.8, E=0.05 * tk.IDENTITY6)
    for adv in ("central", "upwind"):
        cfg = StepConfig(tau=TAU, advection=adv, delta=0.01, eps_v=0.01, eps_s=0.01)
        res, _, _ = assemble(s, s.with_time(TAU), TAU, cfg, problem,
                             interval_forcing(problem, 0, TAU), jacobian=False)
        assert np.max(np.abs(res)) < 1e-14


@pytest.mark.parametrize("adv", ["central", "upwind"])
@pytest.mark.parametrize("stab", [False, True])
def test_engines_agree(adv, stab):
    grid = Grid((4, 5, 1))
    problem = busy_problem(grid)
    s = 0.01 if stab else 0.0
    cfg = StepConfig(tau=TAU, advection=adv, delta=s, eps_v=s, eps_s=s)
    rng = np.random.default_rng(3)
    prev, cur = random_state(grid, rng), random_state(grid, rng, TAU)
    f = interval_forcing(problem, 0, TAU)
    _, Jp, _ = assemble(prev, cur, TAU, cfg, problem, f, engine="pattern")
    _, Jq, _ = assemble(prev, cur, TAU, cfg, problem, f, engine="products")
    assert abs(Jp - Jq).max() <= 1e-12 * abs(Jq).max()


def test_mass_block_sums_to_zero():
    problem = busy_problem(GRID)
    rng = np.random.default_rng(4)
    prev, cur = random_state(GRID, rng), random_state(GRID, rng, TAU)
    cfg = StepConfig(tau=TAU, delta=0.02)
    res, _, _ = assemble(prev, cur, TAU, cfg, problem, interval_forcing(problem, 0, TAU),
                         jacobian=False)
    blocks = residual_blocks(res, GRID.n)
    change = np.sum(cur.rho - prev.rho) / TAU
    assert abs(np.sum(blocks["mass"]) - change) < 1e-12 * max(1.0, abs(change))


def test_uniform_creep_residual():
    mat = cm.thermo_creep_material(1.0, 1.0, 0.0, 1.0, 1.0)
    problem = Problem(GRID, mat, cm.DissipationModel(creep=cm.QuadraticCreep(2.0)))
    E0 = np.array([0.1, -0.05, -0.05, 0, 0, 0])
    prev = uniform_state(GRID, E=E0)
    cur = uniform_state(GRID, E=E0 / 1.1, t=0.1)
    res, _, _ = assemble(prev, cur, 0.1, StepConfig(tau=0.1), problem,
                         interval_forcing(problem, 0, 0.1), jacobian=False)
    b = residual_blocks(res, GRID.n)
    for name in ("mass", "momentum", "strain"):
        assert np.max(np.abs(b[name])) < 1e-13, name
    # at fixed temperature the heat block is minus the creep dissipation
    S = tk.dev(cm.cauchy_stress(mat, cur.E, cur.theta))
    assert np.allclose(b["heat"], -tk.ddot(S, S / 2.0), rtol=1e-12)


def test_prescribed_velocity_replaces_momentum():
    V = np.random.default_rng(5).normal(size=(GRID.n, 3))
    problem = busy_problem(GRID, prescribed_velocity=lambda t, x: V)
    rng = np.random.default_rng(6)
    prev, cur = random_state(GRID, rng), random_state(GRID, rng, TAU)
    res, J, _ = assemble(prev, cur, TAU, StepConfig(tau=TAU), problem,
                         interval_forcing(problem, 0, TAU))
    sl = block_slices(GRID.n)["momentum"]
    assert np.allclose(res[sl], (cur.v - V).T.ravel())
    assert np.allclose(J[sl].toarray(), np.eye(11 * GRID.n)[sl])


def test_nonpositive_states_are_rejected():
    problem = busy_problem(GRID)
    s = uniform_state(GRID)
    bad = State(s.rho * np.r_[-1.0, np.ones(GRID.n - 1)], s.v, s.E, s.theta, TAU)
    with pytest.raises(EvaluationError):
        assemble(s, bad, TAU, StepConfig(tau=TAU), problem, interval_forcing(problem, 0, TAU))

"""Cell-centred finite differences on a rectangular box.

Cells are indexed in C order over ``(nx, ny, nz)``.  An axis with a single
cell is inactive: derivatives along it vanish and it has no boundary faces
(``nz = 1`` is the pseudo-2D plane-strain mode).  Active axes need at least
four cells.

Fields are plain arrays: scalars ``(N,)``, vectors ``(N, 3)``, symmetric
tensors ``(N, 6)`` in the Voigt layout of :mod:`thermovisc.tensor_kernel`.

Boundary handling is selected by ``bc``:

``"extrapolate"``
    one-sided second-order rows at the walls, exact on quadratics;
``"slip"``
    mirror ghosts of a slip wall (normal velocity component odd, tangential
    even).  These are the operators used by the time stepper: the stress
    divergence is the exact negative adjoint of the symmetric gradient, which
    makes the discrete energy identities hold.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import tensor_kernel as tk
from .constitutive import FACES, HeatModel, boundary_outflux

BC_MODES = ("extrapolate", "slip")
MIN_ACTIVE_CELLS = 4


@dataclass(frozen=True)
class Grid:
    shape: tuple[int, int, int]
    lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        lengths = tuple(float(x) for x in self.lengths)
        if len(shape) != 3 or len(lengths) != 3:
            raise ValueError("grid needs three cell counts and three extents")
        if any(L <= 0 or not math.isfinite(L) for L in lengths):
            raise ValueError("grid extents must be positive")
        for n in shape:
            if n < 1 or 1 < n < MIN_ACTIVE_CELLS:
                raise ValueError(
                    f"each axis needs 1 cell (inactive) or >= {MIN_ACTIVE_CELLS} cells, got {shape}")
        if all(n == 1 for n in shape):
            raise ValueError("at least one axis must be active")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(a for a in range(3) if self.shape[a] > 1)

    @property
    def pseudo_2d(self) -> bool:
        return self.shape[2] == 1

    @property
    def cell_volume(self) -> float:
        h = self.spacing
        return h[0] * h[1] * h[2]

    @property
    def volume(self) -> float:
        return self.lengths[0] * self.lengths[1] * self.lengths[2]

    def face_area(self, axis: int) -> float:
        h = self.spacing
        return self.cell_volume / h[axis]

    @functools.cached_property
    def centers(self) -> np.ndarray:
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.shape, self.spacing)]
        X = np.meshgrid(*axes, indexing="ij")
        return np.stack([x.ravel() for x in X], axis=-1)

    def reshape(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f).reshape(self.shape + np.shape(f)[1:])


@dataclass(frozen=True)
class BoundaryPatch:
    face: str
    axis: int
    normal: tuple[float, float, float]
    cells: np.ndarray
    area: float

    def centers(self, grid: Grid) -> np.ndarray:
        """Face-centre coordinates of the patch."""
        x = grid.centers[self.cells].copy()
        x[:, self.axis] = 0.0 if self.face.endswith("min") else grid.lengths[self.axis]
        return x


@functools.lru_cache(maxsize=None)
def boundary_patches(grid: Grid) -> tuple[BoundaryPatch, ...]:
    idx = np.arange(grid.n).reshape(grid.shape)
    out = []
    for a in grid.active:
        for side, face in ((0, FACES[2 * a]), (-1, FACES[2 * a + 1])):
            cells = np.take(idx, side, axis=a).ravel()
            normal = [0.0, 0.0, 0.0]
            normal[a] = -1.0 if side == 0 else 1.0
            out.append(BoundaryPatch(face, a, tuple(normal), cells, grid.face_area(a)))
    return tuple(out)


# ---------------------------------------------------------------------------
# one-dimensional building blocks


def _d1(n: int, h: float, mode: str) -> sp.csr_matrix:
    """Central first derivative with boundary rows set by ``mode``:
    ``even``/``odd`` mirror ghosts or ``extrapolate``."""
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1], D[i, i + 1] = -1.0, 1.0
    if mode == "extrapolate":
        D[0, 0], D[0, 1], D[0, 2] = -3.0, 4.0, -1.0
        D[n - 1, n - 1], D[n - 1, n - 2], D[n - 1, n - 3] = 3.0, -4.0, 1.0
    else:
        s = 1.0 if mode == "even" else -1.0
        D[0, 1], D[0, 0] = 1.0, -s
        D[n - 1, n - 2], D[n - 1, n - 1] = -1.0, s
    return (D / (2.0 * h)).tocsr()


def _d2(n: int, h: float, mode: str) -> sp.csr_matrix:
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1], D[i, i], D[i, i + 1] = 1.0, -2.0, 1.0
    if mode == "extrapolate":
        # quadratic ghost f_{-1} = 3 f_0 - 3 f_1 + f_2
        D[0, 0], D[0, 1], D[0, 2] = 1.0, -2.0, 1.0
        D[n - 1, n - 1], D[n - 1, n - 2], D[n - 1, n - 3] = 1.0, -2.0, 1.0
    else:
        s = 1.0 if mode == "even" else -1.0
        D[0, 0], D[0, 1] = -2.0 + s, 1.0
        D[n - 1, n - 1], D[n - 1, n - 2] = -2.0 + s, 1.0
    return (D / h ** 2).tocsr()


def _one_sided(n: int, h: float, forward: bool) -> sp.csr_matrix:
    """First-order one-sided difference with even ghosts."""
    if forward:
        D = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n)).tolil()
        D[n - 1, n - 1] = 0.0
    else:
        D = sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], shape=(n, n)).tolil()
        D[0, 0] = 0.0
    return (D / h).tocsr()


def _face_diff(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)).tocsr()


def _face_avg(n: int) -> sp.csr_matrix:
    return sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n)).tocsr()


def _lift(grid: Grid, axis: int, op: sp.spmatrix) -> sp.csr_matrix:
    """Apply a 1-D operator along ``axis`` of the C-ordered cell index."""
    mats = [sp.identity(n, format="csr") for n in grid.shape]
    mats[axis] = op
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out.tocsr()


# ---------------------------------------------------------------------------
# operator cache


class Operators:
    """Sparse operators of a grid.  Obtain through :func:`operators`."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.n = grid.n
        self.active = grid.active
        self._cache: dict = {}
        self.pattern_cache: dict = {}

    def _get(self, key, build):
        m = self._cache.get(key)
        if m is None:
            m = build()
            self._cache[key] = m
        return m

    def zero(self, rows: Optional[int] = None) -> sp.csr_matrix:
        return sp.csr_matrix((rows or self.n, self.n))

    def d1(self, axis: int, mode: str) -> sp.csr_matrix:
        """First derivative along ``axis``; zero for inactive axes."""
        if axis not in self.active:
            return self.zero()
        n, h = self.grid.shape[axis], self.grid.spacing[axis]
        return self._get(("d1", axis, mode), lambda: _lift(self.grid, axis, _d1(n, h, mode)))

    def d2(self, axis: int, mode: str) -> sp.csr_matrix:
        if axis not in self.active:
            return self.zero()
        n, h = self.grid.shape[axis], self.grid.spacing[axis]
        return self._get(("d2", axis, mode), lambda: _lift(self.grid, axis, _d2(n, h, mode)))

    def one_sided(self, axis: int, forward: bool) -> sp.csr_matrix:
        if axis not in self.active:
            return self.zero()
        n, h = self.grid.shape[axis], self.grid.spacing[axis]
        return self._get(("os", axis, forward),
                         lambda: _lift(self.grid, axis, _one_sided(n, h, forward)))

    def face_diff(self, axis: int) -> sp.csr_matrix:
        """Jump ``f_R - f_L`` across the interior faces normal to ``axis``."""
        n = self.grid.shape[axis]
        return self._get(("fd", axis), lambda: _lift(self.grid, axis, _face_diff(n)))

    def face_avg(self, axis: int) -> sp.csr_matrix:
        n = self.grid.shape[axis]
        return self._get(("fa", axis), lambda: _lift(self.grid, axis, _face_avg(n)))

    def face_div(self, axis: int) -> sp.csr_matrix:
        """Cell divergence of a normal face flux (wall fluxes are zero)."""
        h = self.grid.spacing[axis]
        return self._get(("fdiv", axis), lambda: (-self.face_diff(axis).T / h).tocsr())

    def face_centers(self, axis: int) -> np.ndarray:
        x = self.face_avg(axis) @ self.grid.centers
        return x

    # velocity operators ----------------------------------------------------

    def vel_mode(self, i: int, j: int, bc: str) -> str:
        if bc == "extrapolate":
            return "extrapolate"
        return "odd" if i == j else "even"

    def dv(self, i: int, j: int, bc: str) -> sp.csr_matrix:
        """``d v_i / d x_j`` acting on the component array ``v_i``."""
        return self.d1(j, self.vel_mode(i, j, bc))

    def grad_v(self, bc: str) -> sp.csr_matrix:
        """(9N x 3N) map ``v -> L_ij`` stored component-major with index ``3i+j``."""
        def build():
            Z = self.zero()
            rows = []
            for i in range(3):
                for j in range(3):
                    rows.append([self.dv(i, j, bc) if k == i else Z for k in range(3)])
            return sp.bmat(rows, format="csr")
        return self._get(("gradv", bc), build)

    def eps(self, bc: str) -> sp.csr_matrix:
        """(6N x 3N) symmetric gradient in Voigt layout."""
        def build():
            Z = self.zero()
            rows = []
            for (i, j) in tk.VOIGT_PAIRS:
                row = [Z, Z, Z]
                if i == j:
                    row[i] = self.dv(i, i, bc)
                else:
                    row[i] = 0.5 * self.dv(i, j, bc)
                    row[j] = 0.5 * self.dv(j, i, bc)
                rows.append(row)
            return sp.bmat(rows, format="csr")
        return self._get(("eps", bc), build)

    def divv(self, bc: str) -> sp.csr_matrix:
        return self._get(("divv", bc),
                         lambda: sp.hstack([self.dv(i, i, bc) for i in range(3)], format="csr"))

    def spin(self, bc: str) -> sp.csr_matrix:
        """(3N x 3N) map ``v -> (W_23, W_13, W_12)`` with ``W = skw(grad v)``."""
        def build():
            Z = self.zero()
            comp = [(1, 2), (0, 2), (0, 1)]
            rows = []
            for (i, j) in comp:
                row = [Z, Z, Z]
                row[i] = 0.5 * self.dv(i, j, bc)
                row[j] = -0.5 * self.dv(j, i, bc)
                rows.append(row)
            return sp.bmat(rows, format="csr")
        return self._get(("spin", bc), build)

    def stress_div(self) -> sp.csr_matrix:
        """(3N x 6N) divergence of a symmetric stress, the negative adjoint of
        the slip symmetric gradient."""
        return self._get("sdiv", lambda: (-(self.eps("slip").T @ sp.diags(
            np.repeat(tk.VOIGT_WEIGHTS, self.n)))).tocsr())

    def hessian_components(self, bc: str) -> list[tuple[int, int, int, int]]:
        """Unique second-derivative components ``(i, j, k, multiplicity)``
        with ``j <= k`` on active axes."""
        act = self.active
        out = []
        for i in range(3):
            for a, j in enumerate(act):
                for k in act[a:]:
                    out.append((i, j, k, 1 if j == k else 2))
        return out

    def hessian(self, bc: str) -> sp.csr_matrix:
        """(U N x 3N) map ``v -> d_j d_k v_i`` over :meth:`hessian_components`."""
        def build():
            Z = self.zero()
            rows = []
            for (i, j, k, _) in self.hessian_components(bc):
                row = [Z, Z, Z]
                if j == k:
                    mode = "extrapolate" if bc == "extrapolate" else self.vel_mode(i, j, bc)
                    row[i] = self.d2(j, mode)
                else:
                    row[i] = (self.dv(i, j, bc) @ self.dv(i, k, bc)).tocsr()
                rows.append(row)
            return sp.bmat(rows, format="csr")
        return self._get(("hess", bc), build)

    def hessian_multiplicity(self, bc: str) -> np.ndarray:
        return np.array([m for (*_, m) in self.hessian_components(bc)], dtype=float)

    def boundary_factor(self) -> np.ndarray:
        """Per cell: total boundary-face area divided by the cell volume."""
        def build():
            f = np.zeros(self.n)
            for patch in boundary_patches(self.grid):
                f[patch.cells] += patch.area / self.grid.cell_volume
            return f
        return self._get("bfac", build)


@functools.lru_cache(maxsize=32)
def operators(grid: Grid) -> Operators:
    return Operators(grid)


def pointwise(blocks: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of a cell-wise linear map given as ``(N, a, b)``, in the
    field-major ordering (component blocks of length ``N``)."""
    blocks = np.asarray(blocks, dtype=float)
    N, a, b = blocks.shape
    rows = (np.arange(a)[:, None, None] * N + np.arange(N)[None, None, :])
    cols = (np.arange(b)[None, :, None] * N + np.arange(N)[None, None, :])
    rows = np.broadcast_to(rows, (a, b, N))
    cols = np.broadcast_to(cols, (a, b, N))
    data = np.transpose(blocks, (1, 2, 0))
    keep = data != 0
    return sp.csr_matrix((data[keep], (rows[keep], cols[keep])), shape=(a * N, b * N))


def flat(f: np.ndarray) -> np.ndarray:
    """Field-major flattening ``(N, c) -> (c N,)``."""
    f = np.asarray(f, dtype=float)
    return f.T.ravel() if f.ndim == 2 else f


def unflat(x: np.ndarray, c: int) -> np.ndarray:
    return np.asarray(x).reshape(c, -1).T


def _check_bc(bc: str) -> None:
    if bc not in BC_MODES:
        raise ValueError(f"bc must be one of {BC_MODES}, got {bc!r}")


# ---------------------------------------------------------------------------
# public field operators


def gradient(grid: Grid, f: np.ndarray, bc: str = "extrapolate") -> np.ndarray:
    """Cell gradient of a scalar.  ``bc='slip'`` uses even (Neumann) ghosts."""
    _check_bc(bc)
    ops = operators(grid)
    mode = "even" if bc == "slip" else "extrapolate"
    return np.stack([ops.d1(a, mode) @ f for a in range(3)], axis=-1)


def velocity_gradient(grid: Grid, v: np.ndarray, bc: str = "extrapolate") -> np.ndarray:
    """``L_ij = d v_i / d x_j`` as ``(N, 3, 3)``."""
    _check_bc(bc)
    L = operators(grid).grad_v(bc) @ flat(v)
    return unflat(L, 9).reshape(-1, 3, 3)


def sym_gradient(grid: Grid, v: np.ndarray, bc: str = "extrapolate") -> np.ndarray:
    _check_bc(bc)
    return unflat(operators(grid).eps(bc) @ flat(v), 6)


def divergence_v(grid: Grid, v: np.ndarray, bc: str = "extrapolate") -> np.ndarray:
    _check_bc(bc)
    return operators(grid).divv(bc) @ flat(v)


def divergence_t(grid: Grid, T: np.ndarray, bc: str = "extrapolate") -> np.ndarray:
    """``(div T)_i = d_j T_ij``.  With ``bc='slip'`` this is the exact negative
    adjoint of :func:`sym_gradient` (normal stress free, shear traction zero)."""
    _check_bc(bc)
    ops = operators(grid)
    if bc == "slip":
        return unflat(ops.stress_div() @ flat(T), 3)
    Tm = tk.to_matrix(T)
    out = np.zeros((grid.n, 3))
    for i in range(3):
        for j in range(3):
            out[:, i] += ops.d1(j, "extrapolate") @ Tm[:, i, j]
    return out


def second_gradient(grid: Grid, v: np.ndarray, bc: str = "extrapolate") -> np.ndarray:
    """``H_ijk = d_j d_k v_i`` as ``(N, 3, 3, 3)``."""
    _check_bc(bc)
    ops = operators(grid)
    Hu = unflat(ops.hessian(bc) @ flat(v), len(ops.hessian_components(bc)))
    H = np.zeros((grid.n, 3, 3, 3))
    for u, (i, j, k, _) in enumerate(ops.hessian_components(bc)):
        H[:, i, j, k] = Hu[:, u]
        H[:, i, k, j] = Hu[:, u]
    return H


def advect(grid: Grid, v: np.ndarray, f: np.ndarray, mode: str = "central",
           bc: str = "extrapolate") -> np.ndarray:
    """``(v . grad) f`` for scalar or component-stacked ``f``."""
    _check_bc(bc)
    ops = operators(grid)
    f2 = np.asarray(f, dtype=float)
    cols = f2[:, None] if f2.ndim == 1 else f2
    out = np.zeros_like(cols)
    dmode = "even" if bc == "slip" else "extrapolate"
    for a in grid.active:
        if mode == "central":
            Df = ops.d1(a, dmode) @ cols
        elif mode == "upwind":
            pos = (v[:, a] >= 0)[:, None]
            Df = np.where(pos, ops.one_sided(a, False) @ cols, ops.one_sided(a, True) @ cols)
        else:
            raise ValueError(f"unknown advection mode {mode!r}")
        out += v[:, a][:, None] * Df
    return out[:, 0] if f2.ndim == 1 else out


def conservative_div_flux(grid: Grid, p: np.ndarray) -> np.ndarray:
    """Flux-form divergence with face fluxes ``avg(p_a)`` and zero flux through
    the walls; its volume integral vanishes identically."""
    ops = operators(grid)
    out = np.zeros(grid.n)
    for a in grid.active:
        out += ops.face_div(a) @ (ops.face_avg(a) @ p[:, a])
    return out


def _hyper_flux(ops: Operators, Hu: np.ndarray, mu: float, p: float, bc: str):
    m = ops.hessian_multiplicity(bc)
    nrm2 = Hu ** 2 @ m
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm2 > 0, nrm2 ** ((p - 2.0) / 2.0), 0.0)
    return mu * scale[:, None] * Hu, m


def hyperstress_pairing(grid: Grid, v: np.ndarray, w: np.ndarray, mu: float, p: float,
                        bc: str = "slip") -> float:
    """``sum_cells mu |H(v)|^(p-2) H(v) : H(w) * cellvol``."""
    if mu < 0:
        raise ValueError("hyper-viscosity mu must be >= 0")
    _check_bc(bc)
    if mu == 0:
        return 0.0
    ops = operators(grid)
    nu = len(ops.hessian_components(bc))
    Hv = unflat(ops.hessian(bc) @ flat(v), nu)
    Hw = unflat(ops.hessian(bc) @ flat(w), nu)
    flux, m = _hyper_flux(ops, Hv, mu, p, bc)
    return integrate(grid, (flux * Hw) @ m)


def hyperstress_residual(grid: Grid, v: np.ndarray, mu: float, p: float,
                         bc: str = "slip") -> np.ndarray:
    """Variational derivative of the pairing in ``v`` per unit cell volume,
    so ``integrate(grid, sum(residual * w, 1)) == pairing(v, w)``."""
    if mu < 0:
        raise ValueError("hyper-viscosity mu must be >= 0")
    _check_bc(bc)
    ops = operators(grid)
    nu = len(ops.hessian_components(bc))
    if mu == 0:
        return np.zeros((grid.n, 3))
    Hv = unflat(ops.hessian(bc) @ flat(v), nu)
    flux, m = _hyper_flux(ops, Hv, mu, p, bc)
    return unflat(ops.hessian(bc).T @ flat(flux * m), 3)


def robin_heat_flux(grid: Grid, theta: np.ndarray, hm: HeatModel, t: float = 0.0,
                    h_ext: Optional[dict] = None) -> np.ndarray:
    """Boundary heat input per unit volume, ``(h_ext - h(theta)) * area / vol``
    summed over the wall faces of each boundary cell.  ``h_ext`` may supply
    precomputed per-face arrays (e.g. time averages)."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(grid.n)
    for patch in boundary_patches(grid):
        th = theta[patch.cells]
        if np.any(th < 0):
            raise ValueError("boundary temperature must be non-negative")
        ext = (h_ext[patch.face] if h_ext is not None
               else hm.external_flux(t, patch.centers(grid), patch.face))
        np.add.at(out, patch.cells, (ext - boundary_outflux(hm, th)) * patch.area / grid.cell_volume)
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Midpoint rule with a correctly rounded, order-independent sum."""
    return grid.cell_volume * math.fsum(np.asarray(f, dtype=float).ravel())


def surface_integrate(grid: Grid, g: dict) -> float:
    """Integrate per-face arrays ``{face: values on patch cells}`` over the walls."""
    total = []
    for patch in boundary_patches(grid):
        if patch.face in g:
            total.extend((patch.area * np.asarray(g[patch.face], dtype=float)).tolist())
    return math.fsum(total)

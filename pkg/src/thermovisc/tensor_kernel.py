"""Small-tensor algebra on 3x3 and 3x3x3 tensors.

All functions are vectorized over leading axes, so a field of ``N`` cell
values is just an array with a leading ``N`` axis.  Storage conventions:

* symmetric tensors (``SymTensor3``): last axis of length 6 in the fixed
  order ``11, 22, 33, 23, 13, 12`` with *tensor* (not engineering) shear
  components.  Symmetry is structural.
* deviatoric tensors (``DevTensor3``): same 6-layout, produced by :func:`dev`
  so that ``trace`` is exactly zero in floating point.
* general tensors (``Tensor3``): last two axes ``(3, 3)``.
* third-order tensors: last three axes ``(3, 3, 3)``.
"""
from __future__ import annotations

import numpy as np

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
#: Frobenius weights of the Voigt components: A:B = sum(w * a * b).
VOIGT_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
#: Voigt index of the (i, j) entry.
VOIGT_INDEX = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2]])
IDENTITY6 = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

ANTISYM_TOL = 1e-12


def to_matrix(a: np.ndarray) -> np.ndarray:
    """Expand Voigt storage ``(..., 6)`` to full ``(..., 3, 3)`` matrices."""
    a = np.asarray(a, dtype=float)
    return a[..., VOIGT_INDEX]


def from_matrix(m: np.ndarray) -> np.ndarray:
    """Symmetric part of ``(..., 3, 3)`` in Voigt storage."""
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-2] + (6,))
    for c, (i, j) in enumerate(VOIGT_PAIRS):
        out[..., c] = 0.5 * (m[..., i, j] + m[..., j, i])
    return out


def identity(shape: tuple[int, ...] = ()) -> np.ndarray:
    return np.broadcast_to(IDENTITY6, shape + (6,)).copy()


def trace(a: np.ndarray) -> np.ndarray:
    return a[..., 0] + a[..., 1] + a[..., 2]


def dev(a: np.ndarray) -> np.ndarray:
    """Deviatoric part.  The third diagonal entry is formed as ``-(d1 + d2)``
    so the trace of the result is exactly zero."""
    a = np.asarray(a, dtype=float)
    m = trace(a) / 3.0
    out = a.copy()
    out[..., 0] = a[..., 0] - m
    out[..., 1] = a[..., 1] - m
    out[..., 2] = -(out[..., 0] + out[..., 1])
    return out


def sph(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return (trace(a) / 3.0)[..., None] * IDENTITY6


def trace_sph_dev(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(tr A, sph A, dev A)`` with ``sph A = (tr A / 3) I``."""
    a = np.asarray(a, dtype=float)
    return trace(a), sph(a), dev(a)


def ddot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frobenius product ``A : B`` of two Voigt-stored symmetric tensors."""
    return np.einsum("...c,c,...c->...", a, VOIGT_WEIGHTS, b)


def norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(ddot(a, a))


def sym_skw(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a general tensor into ``(sym L, skw L)``; ``sym`` in Voigt storage."""
    L = np.asarray(L, dtype=float)
    Lt = np.swapaxes(L, -1, -2)
    return from_matrix(L), 0.5 * (L - Lt)


def jaumann_spin_term(W: np.ndarray, E: np.ndarray, check: bool = True) -> np.ndarray:
    """Non-advective part ``E W - W E`` of the Zaremba-Jaumann operator.

    ``W`` must be antisymmetric (checked to ``1e-12`` unless ``check=False``).
    The product ``E W - W E`` of a symmetric and an antisymmetric matrix is
    symmetric, so the result is returned in Voigt storage.
    """
    W = np.asarray(W, dtype=float)
    if check:
        err = np.max(np.abs(W + np.swapaxes(W, -1, -2)), initial=0.0)
        if err > ANTISYM_TOL:
            raise ValueError(f"spin tensor is not antisymmetric (|W + W^T| = {err:.3e})")
    Em = to_matrix(E)
    EW = Em @ W
    # E W - W E = E W + (E W)^T for W^T = -W
    return from_matrix(EW + np.swapaxes(EW, -1, -2))


def commutator_contraction(S: np.ndarray, E: np.ndarray, L: np.ndarray) -> np.ndarray:
    """``S : (W E - E W)`` with ``W = skw(L)``; vanishes when S and E commute."""
    _, W = sym_skw(L)
    Sm, Em = to_matrix(S), to_matrix(E)
    C = W @ Em - Em @ W
    return np.einsum("...ij,...ij->...", Sm, C)


def triple_contraction(H1: np.ndarray, H2: np.ndarray) -> np.ndarray:
    return np.einsum("...ijk,...ijk->...", H1, H2)


def boxtimes(G: np.ndarray) -> np.ndarray:
    """``[G (x) G]_ij = sum_kl G_ikl G_jkl`` as a Voigt-stored symmetric tensor."""
    G = np.asarray(G, dtype=float)
    return from_matrix(np.einsum("...ikl,...jkl->...ij", G, G))


def skew_components(W: np.ndarray) -> np.ndarray:
    """Independent entries ``(W_23, W_13, W_12)`` of an antisymmetric tensor."""
    return np.stack([W[..., 1, 2], W[..., 0, 2], W[..., 0, 1]], axis=-1)


def skew_from_components(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    W = np.zeros(w.shape[:-1] + (3, 3))
    W[..., 1, 2], W[..., 2, 1] = w[..., 0], -w[..., 0]
    W[..., 0, 2], W[..., 2, 0] = w[..., 1], -w[..., 1]
    W[..., 0, 1], W[..., 1, 0] = w[..., 2], -w[..., 2]
    return W


def spin_jacobians(w: np.ndarray, E: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of ``E W - W E`` (Voigt) w.r.t. the Voigt entries of ``E``
    and the skew components ``w`` of ``W``.

    Returns arrays of shape ``(..., 6, 6)`` and ``(..., 6, 3)``.  The map is
    bilinear, so each column is the term evaluated on a basis element.
    """
    w = np.asarray(w, dtype=float)
    E = np.asarray(E, dtype=float)
    W = skew_from_components(w)
    dE = np.empty(w.shape[:-1] + (6, 6))
    for c in range(6):
        e = np.zeros(6)
        e[c] = 1.0
        dE[..., :, c] = jaumann_spin_term(W, np.broadcast_to(e, E.shape), check=False)
    dW = np.empty(E.shape[:-1] + (6, 3))
    for k in range(3):
        b = np.zeros(3)
        b[k] = 1.0
        dW[..., :, k] = jaumann_spin_term(skew_from_components(b), E, check=False)
    return dE, dW

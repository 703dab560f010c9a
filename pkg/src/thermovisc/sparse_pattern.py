"""Fast numeric assembly of sparse matrices with a fixed structure.

A matrix is written as a sum of terms ``L diag(x) R diag(y)`` where ``L`` and
``R`` are constant sparse matrices and ``x``, ``y`` vary between calls.  Each
term is compiled once into triples ``(row, col, k, weight)`` with
``weight = L[row, k] * R[k, col]``; afterwards the values of the whole matrix
come from one gather-multiply per term and a single ``bincount`` into the
fixed CSC pattern.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class CompiledTerm:
    rows: np.ndarray
    cols: np.ndarray
    k: np.ndarray
    weight: np.ndarray


def compile_term(L: sp.spmatrix, R: sp.spmatrix) -> CompiledTerm:
    Lc = sp.csc_matrix(L)
    Rr = sp.csr_matrix(R)
    Lc.sum_duplicates()
    Rr.sum_duplicates()
    if Lc.shape[1] != Rr.shape[0]:
        raise ValueError("inner dimensions differ")
    nL = np.diff(Lc.indptr)
    nR = np.diff(Rr.indptr)
    cnt = nL * nR
    total = int(cnt.sum())
    k = np.repeat(np.arange(Lc.shape[1]), cnt)
    start = np.repeat(np.cumsum(cnt) - cnt, cnt)
    local = np.arange(total) - start
    nRk = nR[k]
    a = local // np.maximum(nRk, 1)
    b = local % np.maximum(nRk, 1)
    li = Lc.indptr[k] + a
    ri = Rr.indptr[k] + b
    return CompiledTerm(Lc.indices[li].astype(np.int64), Rr.indices[ri].astype(np.int64),
                        k.astype(np.int64), Lc.data[li] * Rr.data[ri])


class Pattern:
    """Global CSC structure of a list of compiled, offset terms."""

    def __init__(self, shape: tuple[int, int], terms: list):
        self.shape = shape
        rows = np.concatenate([t.rows + r0 for (t, r0, c0) in terms])
        cols = np.concatenate([t.cols + c0 for (t, r0, c0) in terms])
        lin = cols * shape[0] + rows
        uniq, inv = np.unique(lin, return_inverse=True)
        self.indices = (uniq % shape[0]).astype(np.int32)
        ucols = uniq // shape[0]
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(ucols, minlength=shape[1]))]).astype(np.int32)
        self.nnz = len(uniq)
        self.pos = inv.astype(np.int64)
        self.terms = [t for (t, _, _) in terms]
        self.local_cols = [t.cols for t in self.terms]

    def build(self, xs: list, ys: list) -> sp.csc_matrix:
        vals = []
        for t, x, y in zip(self.terms, xs, ys):
            v = t.weight * x[t.k]
            if y is not None:
                v = v * y[t.cols]
            vals.append(v)
        data = np.bincount(self.pos, weights=np.concatenate(vals), minlength=self.nnz)
        # the structure arrays are cached, hand out copies
        return sp.csc_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class PatternBuilder:
    """Collects the terms of one assembly.  Operands are supplied lazily so
    constant matrices are only touched the first time a term key is seen."""

    def __init__(self, shape: tuple[int, int], cache: dict, signature: tuple):
        self.shape = shape
        self.cache = cache
        self.signature = signature
        self.keys: list = []
        self.offsets: list = []
        self.xs: list = []
        self.ys: list = []
        self.makers: list = []

    def add(self, key, row0: int, col0: int, make: Callable[[], tuple], x,
            y: Optional[np.ndarray] = None) -> None:
        self.keys.append(key)
        self.offsets.append((row0, col0))
        self.xs.append(np.asarray(x, dtype=float))
        self.ys.append(None if y is None else np.asarray(y, dtype=float))
        self.makers.append(make)

    def build(self) -> sp.csc_matrix:
        sig = (self.signature, tuple(self.keys), tuple(self.offsets))
        pat = self.cache.get(sig)
        if pat is None:
            terms = []
            for key, (r0, c0), make in zip(self.keys, self.offsets, self.makers):
                ct = self.cache.get(("term", key))
                if ct is None:
                    L, R = make()
                    ct = compile_term(L, R)
                    self.cache[("term", key)] = ct
                terms.append((ct, r0, c0))
            pat = Pattern(self.shape, terms)
            self.cache[sig] = pat
        return pat.build(self.xs, self.ys)

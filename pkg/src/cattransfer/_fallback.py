"""Pure numpy/scipy versions of the compiled kernels (same signatures)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def csr_matmat(indptr, indices, data, x, out):
    n = len(indptr) - 1
    a = sp.csr_matrix((data, indices, indptr), shape=(n, x.shape[0]))
    out[...] = a @ x


def anti_hermitian_part(a, out):
    np.subtract(a, a.conj().T, out=out)
    out *= -1j


def jump_sandwich(offsets, rows, cols, vals, rho, out):
    for k in range(len(offsets) - 1):
        lo, hi = offsets[k], offsets[k + 1]
        if lo == hi:
            continue
        r, c, v = rows[lo:hi], cols[lo:hi], vals[lo:hi]
        out[np.ix_(r, r)] += np.outer(v, v.conj()) * rho[np.ix_(c, c)]


def axpy_into(out, x, alpha, y):
    np.multiply(y, alpha, out=out)
    out += x


def axpy_inplace(x, alpha, y):
    x += alpha * y

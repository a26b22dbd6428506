# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the density-matrix and batched-vector hot loops.

Every function here has a numpy/scipy twin in ``_fallback.py`` with the same
signature; ``cattransfer.kernels`` picks one at import time.
"""

from libc.string cimport memset

ctypedef double complex cplx

cdef extern from "_kernels_impl.h":
    void ct_caxpy(double *o, const double *x, double vr, double vi,
                  Py_ssize_t c0, Py_ssize_t c1) nogil
    void ct_axpy_into(double *o, const double *x, double ar, double ai,
                      const double *y, Py_ssize_t n) nogil
    void ct_axpy_inplace(double *x, double ar, double ai,
                         const double *y, Py_ssize_t n) nogil

# columns of the dense operand per pass; the active slab of x stays in cache
cdef enum:
    COL_BLOCK = 64
    TILE = 32


def csr_matmat(const int[::1] indptr, const int[::1] indices,
               const cplx[::1] data, const cplx[:, ::1] x,
               cplx[:, ::1] out):
    """out = A @ x with A in CSR form, x C-contiguous (n, m)."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t m = x.shape[1]
    cdef Py_ssize_t i, p, c0, c1
    cdef double *o = <double *> &out[0, 0]
    cdef const double *xs = <const double *> &x[0, 0]
    cdef cplx v
    with nogil:
        memset(o, 0, n_rows * m * sizeof(cplx))
        c0 = 0
        while c0 < m:
            c1 = c0 + COL_BLOCK
            if c1 > m:
                c1 = m
            for i in range(n_rows):
                for p in range(indptr[i], indptr[i + 1]):
                    v = data[p]
                    ct_caxpy(o + 2 * i * m, xs + 2 * indices[p] * m,
                             v.real, v.imag, c0, c1)
            c0 = c1


def anti_hermitian_part(const cplx[:, ::1] a, cplx[:, ::1] out):
    """out = -i (a - a^H), tiled so the transposed read stays cache-local."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i0, j0, i, j, i1, j1, ij, ji
    cdef double *o = <double *> &out[0, 0]
    cdef const double *s = <const double *> &a[0, 0]
    cdef Py_ssize_t tile = TILE
    with nogil:
        i0 = 0
        while i0 < n:
            i1 = min(i0 + tile, n)
            j0 = 0
            while j0 < n:
                j1 = min(j0 + tile, n)
                for i in range(i0, i1):
                    for j in range(j0, j1):
                        ij = 2 * (i * n + j)
                        ji = 2 * (j * n + i)
                        o[ij] = s[ij + 1] + s[ji + 1]
                        o[ij + 1] = s[ji] - s[ij]
                j0 = j1
            i0 = i1


def jump_sandwich(const int[::1] offsets, const int[::1] rows,
                  const int[::1] cols, const cplx[::1] vals,
                  const cplx[:, ::1] rho, cplx[:, ::1] out):
    """out += sum_k C_k rho C_k^H for operators with one entry per row.

    Operator k owns entries ``offsets[k]:offsets[k+1]``; entry e sits at
    (rows[e], cols[e]) with value vals[e].  Zero rows are simply absent.
    """
    cdef Py_ssize_t n_ops = offsets.shape[0] - 1
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t k, e1, e2, lo, hi, c2
    cdef double vr, vi, wr, wi, xr, xi, ur, ui
    cdef double *orow
    cdef const double *rrow
    cdef const double *v = <const double *> &vals[0]
    with nogil:
        for k in range(n_ops):
            lo = offsets[k]
            hi = offsets[k + 1]
            for e1 in range(lo, hi):
                vr = v[2 * e1]
                vi = v[2 * e1 + 1]
                orow = <double *> &out[rows[e1], 0]
                rrow = <const double *> &rho[cols[e1], 0]
                for e2 in range(lo, hi):
                    # w = v1 * conj(v2)
                    ur = v[2 * e2]
                    ui = v[2 * e2 + 1]
                    wr = vr * ur + vi * ui
                    wi = vi * ur - vr * ui
                    c2 = 2 * cols[e2]
                    xr = rrow[c2]
                    xi = rrow[c2 + 1]
                    orow[2 * rows[e2]] += wr * xr - wi * xi
                    orow[2 * rows[e2] + 1] += wr * xi + wi * xr


def axpy_into(cplx[:, ::1] out, const cplx[:, ::1] x, cplx alpha,
              const cplx[:, ::1] y):
    """out = x + alpha * y."""
    with nogil:
        ct_axpy_into(<double *> &out[0, 0], <const double *> &x[0, 0],
                     alpha.real, alpha.imag, <const double *> &y[0, 0],
                     x.shape[0] * x.shape[1])


def axpy_inplace(cplx[:, ::1] x, cplx alpha, const cplx[:, ::1] y):
    """x += alpha * y."""
    with nogil:
        ct_axpy_inplace(<double *> &x[0, 0], alpha.real, alpha.imag,
                        <const double *> &y[0, 0], x.shape[0] * x.shape[1])

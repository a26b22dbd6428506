#ifndef CATTRANSFER_KERNELS_IMPL_H
#define CATTRANSFER_KERNELS_IMPL_H

#include <stddef.h>

/* o[c] += v * x[c] over interleaved complex doubles, c in [c0, c1) */
static inline void ct_caxpy(double *restrict o, const double *restrict x,
                            double vr, double vi, ptrdiff_t c0, ptrdiff_t c1)
{
    for (ptrdiff_t c = 2 * c0; c < 2 * c1; c += 2) {
        double xr = x[c], xi = x[c + 1];
        o[c] += vr * xr - vi * xi;
        o[c + 1] += vr * xi + vi * xr;
    }
}

/* o[c] = x[c] + a * y[c] over n interleaved complex doubles */
static inline void ct_axpy_into(double *restrict o, const double *restrict x,
                                double ar, double ai,
                                const double *restrict y, ptrdiff_t n)
{
    for (ptrdiff_t c = 0; c < 2 * n; c += 2) {
        double yr = y[c], yi = y[c + 1];
        o[c] = x[c] + ar * yr - ai * yi;
        o[c + 1] = x[c + 1] + ar * yi + ai * yr;
    }
}

static inline void ct_axpy_inplace(double *restrict x, double ar, double ai,
                                   const double *restrict y, ptrdiff_t n)
{
    for (ptrdiff_t c = 0; c < 2 * n; c += 2) {
        double yr = y[c], yi = y[c + 1];
        x[c] += ar * yr - ai * yi;
        x[c + 1] += ar * yi + ai * yr;
    }
}

#endif

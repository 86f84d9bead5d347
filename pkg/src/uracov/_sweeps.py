"""Compiled coordinate-sweep kernels for the covariance decoder.

Each kernel performs one full pass over the given coordinate order,
applying exact single-coordinate minimizers and rank-one state updates in
place.  They mirror the reference operations in ``uracov.decoder`` step for
step; the pure-python path stays available as a fallback and as the test
oracle.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def ml_sweep(cols, sample_cov, sigma_inv, gamma, order):
    """One likelihood-descent pass; mutates sigma_inv and gamma.

    cols holds the codebook columns as contiguous rows (2^J, L).  Returns
    the number of nonzero steps, or -1 when a rank-one denominator loses
    positivity and the caller must resynchronize the inverse.
    """
    num_dims = cols.shape[1]
    accepted = 0
    for t in range(order.shape[0]):
        k = order[t]
        a = cols[k]
        v = np.dot(sigma_inv, a)
        den = 0.0
        for i in range(num_dims):
            den += (a[i].conjugate() * v[i]).real
        w = np.dot(sample_cov, v)
        quad = 0.0
        for i in range(num_dims):
            quad += (v[i].conjugate() * w[i]).real
        d = (quad - den) / (den * den)
        if d < -gamma[k]:
            d = -gamma[k]
        if d != 0.0:
            denom = 1.0 + d * den
            if denom <= 0.0:
                return -1
            c = d / denom
            for i in range(num_dims):
                cvi = c * v[i]
                for j in range(num_dims):
                    sigma_inv[i, j] -= cvi * v[j].conjugate()
            gamma[k] += d
            accepted += 1
    return accepted


@njit(cache=True)
def nnls_sweep(cols, norm4, diff, gamma, order):
    """One least-squares pass; mutates diff = sample_cov - Sigma(gamma) and gamma.

    norm4 holds the squared column norms squared, i.e. ||a_k||^4.  Returns
    the number of nonzero steps.
    """
    num_dims = cols.shape[1]
    accepted = 0
    for t in range(order.shape[0]):
        k = order[t]
        a = cols[k]
        u = np.dot(diff, a)
        num = 0.0
        for i in range(num_dims):
            num += (a[i].conjugate() * u[i]).real
        d = num / norm4[k]
        if d < -gamma[k]:
            d = -gamma[k]
        if d != 0.0:
            for i in range(num_dims):
                dai = d * a[i]
                for j in range(num_dims):
                    diff[i, j] -= dai * a[j].conjugate()
            gamma[k] += d
            accepted += 1
    return accepted

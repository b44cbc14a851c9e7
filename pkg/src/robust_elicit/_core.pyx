# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: weighted lasso coordinate descent and pair counting.

Both functions have numpy twins in ``_kernels_py`` with identical semantics;
``robust_elicit.kernels`` picks one at import time.
"""
from libc.math cimport fabs


cdef inline double _soft(double z, double t) nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def weighted_cd(const double[:, ::1] Xt, double[::1] resid, double[::1] beta,
                const double[::1] w, const double[::1] colsq, double lam,
                double tol, int max_iter):
    """Cyclic coordinate descent for (1/2n) sum w_i r_i^2 + lam * |beta|_1.

    ``Xt`` is the transposed design (p x n). ``resid`` and ``beta`` are
    updated in place. Returns ``(sweeps, converged)``.
    """
    cdef Py_ssize_t p = Xt.shape[0]
    cdef Py_ssize_t n = Xt.shape[1]
    cdef Py_ssize_t i, j
    cdef int sweep = 0
    cdef double rho, new, delta, max_delta, inv_n = 1.0 / n
    cdef bint converged = False
    with nogil:
        while sweep < max_iter:
            sweep += 1
            max_delta = 0.0
            for j in range(p):
                if colsq[j] <= 0.0:
                    continue
                rho = 0.0
                for i in range(n):
                    rho = rho + w[i] * Xt[j, i] * resid[i]
                rho = rho * inv_n + colsq[j] * beta[j]
                new = _soft(rho, lam) / colsq[j]
                delta = new - beta[j]
                if delta != 0.0:
                    for i in range(n):
                        resid[i] = resid[i] - Xt[j, i] * delta
                    beta[j] = new
                    if fabs(delta) > max_delta:
                        max_delta = fabs(delta)
            if max_delta < tol:
                converged = True
                break
    return sweep, converged


def pair_counts(const double[::1] a, const double[::1] b):
    """Count pairs i < j with a_i != a_j, and among them reversed / tied in b.

    Returns ``(strict, discordant, tied)``.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j
    cdef long long strict = 0, discordant = 0, tied = 0
    cdef double da, db
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                da = a[i] - a[j]
                if da == 0.0:
                    continue
                strict += 1
                db = b[i] - b[j]
                if db == 0.0:
                    tied += 1
                elif (da > 0.0) != (db > 0.0):
                    discordant += 1
    return strict, discordant, tied

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled edge-energy kernels. Mirrors ``_pykernels`` function by function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt, fmax

cnp.import_array()


cdef inline double _apow(double a, double p) nogil:
    # a >= 0; small integer powers skip libm
    if p == 2.0:
        return a * a
    if p == 3.0:
        return a * a * a
    if p == 1.0:
        return a
    if p == 0.0:
        return 1.0
    return pow(a, p)


cdef inline double _spow(double d, double p) nogil:
    # |d|^(p-2) * d, with the p > 1 limit 0 at d = 0
    cdef double a = fabs(d)
    if a == 0.0:
        return 0.0
    return _apow(a, p - 2.0) * d


def edge_energy(const double[::1] u, const long[::1] ea, const long[::1] eb,
                const double[::1] coef, double p):
    cdef Py_ssize_t e, m = ea.shape[0]
    cdef double total = 0.0
    with nogil:
        for e in range(m):
            total += coef[e] * _apow(fabs(u[ea[e]] - u[eb[e]]), p)
    return total


def edge_force(const double[::1] u, const long[::1] ea, const long[::1] eb,
               const double[::1] coef, double p, Py_ssize_t n, double zero_tol=0.0):
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t e, m = ea.shape[0]
    cdef double t, d
    with nogil:
        for e in range(m):
            d = u[ea[e]] - u[eb[e]]
            if fabs(d) <= zero_tol:
                continue
            t = coef[e] * p * _spow(d, p)
            out[ea[e]] += t
            out[eb[e]] -= t
    return out_arr


def irls_weights(const double[::1] u, const long[::1] ea, const long[::1] eb,
                 const double[::1] coef, double p, double floor):
    cdef Py_ssize_t e, m = ea.shape[0]
    w_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] w = w_arr
    with nogil:
        for e in range(m):
            w[e] = coef[e] * p * _apow(fmax(fabs(u[ea[e]] - u[eb[e]]), floor), p - 2.0)
    return w_arr


def line_phi(const double[::1] delta, const double[::1] ddelta,
             const double[::1] coef, double p, double t):
    cdef Py_ssize_t e, m = delta.shape[0]
    cdef double phi = 0.0, dphi = 0.0, z
    with nogil:
        for e in range(m):
            z = delta[e] + t * ddelta[e]
            phi += coef[e] * _apow(fabs(z), p)
            dphi += coef[e] * p * _spow(z, p) * ddelta[e]
    return phi, dphi


def node_max(const double[::1] q, const long[::1] ea, const long[::1] eb,
             Py_ssize_t n):
    g_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] g = g_arr
    cdef Py_ssize_t e, m = ea.shape[0]
    with nogil:
        for e in range(m):
            if q[e] > g[ea[e]]:
                g[ea[e]] = q[e]
            if q[e] > g[eb[e]]:
                g[eb[e]] = q[e]
    return g_arr


cdef double _local(double t, Py_ssize_t i, const double[::1] u,
                   const long[::1] indptr, const long[::1] indices,
                   const double[::1] c, double lin, double p) nogil:
    cdef Py_ssize_t k
    cdef double s = lin * t
    for k in range(indptr[i], indptr[i + 1]):
        s += c[k] * _apow(fabs(t - u[indices[k]]), p)
    return s


cdef double _total(const double[::1] u, const long[::1] indptr,
                   const long[::1] indices, const double[::1] c,
                   const double[::1] lin, double p) nogil:
    cdef Py_ssize_t i, k, n = u.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += lin[i] * u[i]
        for k in range(indptr[i], indptr[i + 1]):
            if indices[k] > i:
                s += c[k] * _apow(fabs(u[i] - u[indices[k]]), p)
    return s


def coordinate_descent(double[::1] u, const long[::1] indptr,
                       const long[::1] indices, const double[::1] c,
                       const double[::1] lin, const unsigned char[::1] free,
                       double p, double tol_energy, double tol_move,
                       long max_sweeps):
    """Golden-section coordinate search; edits ``u`` in place."""
    cdef Py_ssize_t i, k, n = u.shape[0]
    cdef long sweep = 0
    cdef double gr = (sqrt(5.0) - 1.0) / 2.0
    cdef double lo, hi, a, b, fa, fb, cs, ulo, uhi, x, fx, f0, move, e_old, e_new
    cdef bint converged = False
    cdef int it
    with nogil:
        e_old = _total(u, indptr, indices, c, lin, p)
        while sweep < max_sweeps:
            sweep += 1
            move = 0.0
            for i in range(n):
                if not free[i] or indptr[i] == indptr[i + 1]:
                    continue
                ulo = u[indices[indptr[i]]]
                uhi = ulo
                cs = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    x = u[indices[k]]
                    if x < ulo:
                        ulo = x
                    if x > uhi:
                        uhi = x
                    cs += c[k] * p
                if cs <= 0.0:
                    continue
                x = pow(fabs(lin[i]) / cs, 1.0 / (p - 1.0))
                lo = ulo - x
                hi = uhi + x
                a = hi - gr * (hi - lo)
                b = lo + gr * (hi - lo)
                fa = _local(a, i, u, indptr, indices, c, lin[i], p)
                fb = _local(b, i, u, indptr, indices, c, lin[i], p)
                it = 0
                while hi - lo > 1e-15 * fmax(1.0, fabs(lo) + fabs(hi)) and it < 200:
                    it += 1
                    if fa < fb:
                        hi = b
                        b = a
                        fb = fa
                        a = hi - gr * (hi - lo)
                        fa = _local(a, i, u, indptr, indices, c, lin[i], p)
                    else:
                        lo = a
                        a = b
                        fa = fb
                        b = lo + gr * (hi - lo)
                        fb = _local(b, i, u, indptr, indices, c, lin[i], p)
                x = 0.5 * (lo + hi)
                fx = _local(x, i, u, indptr, indices, c, lin[i], p)
                f0 = _local(u[i], i, u, indptr, indices, c, lin[i], p)
                if fx < f0:
                    if fabs(x - u[i]) > move:
                        move = fabs(x - u[i])
                    u[i] = x
            e_new = _total(u, indptr, indices, c, lin, p)
            if fabs(e_old - e_new) < tol_energy * fmax(1.0, fabs(e_new)) and move < tol_move:
                converged = True
                e_old = e_new
                break
            e_old = e_new
    return sweep, e_old, converged

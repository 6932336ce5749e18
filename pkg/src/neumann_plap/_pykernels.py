"""Pure numpy/Python versions of the edge-energy kernels.

Same signatures and semantics as the compiled ``_ckernels`` module. The
vectorised kernels are within a few ulps of the compiled ones (summation
order differs); ``coordinate_descent`` follows the identical update rule.
"""

import math

import numpy as np


def _spow(d, p):
    a = np.abs(d)
    out = np.zeros_like(d)
    nz = a > 0.0
    out[nz] = a[nz] ** (p - 2.0) * d[nz]
    return out


def edge_energy(u, ea, eb, coef, p):
    return float(np.sum(coef * np.abs(u[ea] - u[eb]) ** p))


def edge_force(u, ea, eb, coef, p, n, zero_tol=0.0):
    d = u[ea] - u[eb]
    d[np.abs(d) <= zero_tol] = 0.0
    t = coef * p * _spow(d, p)
    out = np.zeros(n, dtype=np.float64)
    np.add.at(out, ea, t)
    np.subtract.at(out, eb, t)
    return out


def irls_weights(u, ea, eb, coef, p, floor):
    return coef * p * np.maximum(np.abs(u[ea] - u[eb]), floor) ** (p - 2.0)


def line_phi(delta, ddelta, coef, p, t):
    z = delta + t * ddelta
    phi = float(np.sum(coef * np.abs(z) ** p))
    dphi = float(np.sum(coef * p * _spow(z, p) * ddelta))
    return phi, dphi


def node_max(q, ea, eb, n):
    g = np.zeros(n, dtype=np.float64)
    np.maximum.at(g, ea, q)
    np.maximum.at(g, eb, q)
    return g


def _local(t, i, u, indptr, indices, c, lin, p):
    s = lin * t
    for k in range(indptr[i], indptr[i + 1]):
        s += c[k] * abs(t - u[indices[k]]) ** p
    return s


def _total(u, indptr, indices, c, lin, p):
    s = 0.0
    for i in range(len(u)):
        s += lin[i] * u[i]
        for k in range(indptr[i], indptr[i + 1]):
            if indices[k] > i:
                s += c[k] * abs(u[i] - u[indices[k]]) ** p
    return s


def coordinate_descent(u, indptr, indices, c, lin, free, p, tol_energy,
                       tol_move, max_sweeps):
    """Golden-section coordinate search; edits ``u`` in place."""
    # plain lists are several times faster than numpy scalars in this loop
    uu = [float(x) for x in u]
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    c = [float(x) for x in c]
    lin = [float(x) for x in lin]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    n = len(uu)
    e_old = _total(uu, indptr, indices, c, lin, p)
    converged = False
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        move = 0.0
        for i in range(n):
            if not free[i] or indptr[i] == indptr[i + 1]:
                continue
            nbr = [uu[indices[k]] for k in range(indptr[i], indptr[i + 1])]
            cs = p * sum(c[indptr[i]:indptr[i + 1]])
            if cs <= 0.0:
                continue
            x = (abs(lin[i]) / cs) ** (1.0 / (p - 1.0))
            lo = min(nbr) - x
            hi = max(nbr) + x
            a = hi - gr * (hi - lo)
            b = lo + gr * (hi - lo)
            fa = _local(a, i, uu, indptr, indices, c, lin[i], p)
            fb = _local(b, i, uu, indptr, indices, c, lin[i], p)
            it = 0
            while hi - lo > 1e-15 * max(1.0, abs(lo) + abs(hi)) and it < 200:
                it += 1
                if fa < fb:
                    hi, b, fb = b, a, fa
                    a = hi - gr * (hi - lo)
                    fa = _local(a, i, uu, indptr, indices, c, lin[i], p)
                else:
                    lo, a, fa = a, b, fb
                    b = lo + gr * (hi - lo)
                    fb = _local(b, i, uu, indptr, indices, c, lin[i], p)
            x = 0.5 * (lo + hi)
            if _local(x, i, uu, indptr, indices, c, lin[i], p) < _local(
                    uu[i], i, uu, indptr, indices, c, lin[i], p):
                move = max(move, abs(x - uu[i]))
                uu[i] = x
        e_new = _total(uu, indptr, indices, c, lin, p)
        if abs(e_old - e_new) < tol_energy * max(1.0, abs(e_new)) and move < tol_move:
            converged = True
            e_old = e_new
            break
        e_old = e_new
    u[:] = uu
    return sweep, e_old, converged

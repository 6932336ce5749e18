"""Minimizer for convex edge energies  sum_e c_e |u_a - u_b|^p + <lin, u>.

Shared by the Neumann solver and the relative capacity. The main path is an
IRLS step (weighted graph Laplacian solve) followed by an exact line search
along the step, which keeps the energy sequence monotone. Backtracking
gradient descent is the fallback when IRLS stalls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from . import kernels

log = logging.getLogger(__name__)

# round-off allowance when comparing consecutive energies
_POLISH_STEPS = 20
_ENERGY_SLACK = 64 * np.finfo(float).eps


def round_off_delta(u):
    """Edge differences at or below this size are indistinguishable from zero.

    For p < 2 a difference of one ulp still contributes ``|du|^(p-1)`` to the
    gradient, far above any sensible stopping tolerance; such differences are
    treated as exact zeros, where the derivative vanishes.
    """
    return 32.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(u), initial=0.0)))


@dataclass
class MinimizeResult:
    u: np.ndarray
    energy: float
    edge_energy: float
    iterations: int
    residual: float
    converged: bool
    message: str = ""
    # (total energy, edge energy) for the start point and every accepted iterate
    history: list = field(default_factory=list)
    path: list = field(default_factory=list)


class _Problem:
    def __init__(self, n, ea, eb, coef, p, lin, free, mean_weights):
        keep = coef > 0
        self.n = n
        self.ea = np.ascontiguousarray(ea[keep], dtype=np.int64)
        self.eb = np.ascontiguousarray(eb[keep], dtype=np.int64)
        self.coef = np.ascontiguousarray(coef[keep], dtype=np.float64)
        self.p = float(p)
        self.lin = np.ascontiguousarray(lin, dtype=np.float64)
        self.free = free
        self.free_idx = np.flatnonzero(free)
        self.pos = -np.ones(n, dtype=np.int64)
        self.pos[self.free_idx] = np.arange(self.free_idx.size)
        self.m = None if mean_weights is None else np.asarray(mean_weights, float)

    def edge_part(self, u):
        return kernels.edge_energy(u, self.ea, self.eb, self.coef, self.p)

    def energy(self, u):
        e = self.edge_part(u)
        return e + float(self.lin @ u), e

    def gradient(self, u):
        g = kernels.edge_force(u, self.ea, self.eb, self.coef, self.p, self.n,
                               round_off_delta(u))
        g += self.lin
        g[~self.free] = 0.0
        return g

    def residual(self, g):
        if self.m is None:
            return float(np.max(np.abs(g[self.free_idx]), initial=0.0))
        # stationarity on the mean-zero slice: g = lambda * m
        lam = g.sum() / self.m.sum()
        return float(np.max(np.abs((g - lam * self.m)[self.free_idx]), initial=0.0))

    def round_off_floor(self, u):
        """Smallest residual double precision can certify at ``u``.

        An edge difference known to within ``delta = round_off_delta(u)``
        moves its derivative by up to ``coef * p * delta^(p-1)``; summed over
        the edges at a node this bounds the resolvable stationarity defect.
        """
        load = np.zeros(self.n)
        np.add.at(load, self.ea, self.coef)
        np.add.at(load, self.eb, self.coef)
        return float(self.p * load.max(initial=0.0) * round_off_delta(u) ** (self.p - 1.0))

    def project(self, u):
        if self.m is not None:
            u = u - (self.m @ u) / self.m.sum()
        return u

    def direction(self, u, g, irls_epsilon):
        delta = u[self.ea] - u[self.eb]
        dmax = float(np.max(np.abs(delta), initial=0.0))
        if dmax == 0.0:
            floor = 1.0
        elif self.p <= 2.0:
            floor = irls_epsilon * max(1.0, dmax)
        else:
            floor = max(irls_epsilon, 1e-6 * dmax)
        w = kernels.irls_weights(u, self.ea, self.eb, self.coef, self.p, floor)
        pa, pb = self.pos[self.ea], self.pos[self.eb]
        k = self.free_idx.size
        rows, cols, vals = [], [], []
        fa, fb = pa >= 0, pb >= 0
        rows += [pa[fa], pb[fb]]
        cols += [pa[fa], pb[fb]]
        vals += [w[fa], w[fb]]
        both = fa & fb
        rows += [pa[both], pb[both]]
        cols += [pb[both], pa[both]]
        vals += [-w[both], -w[both]]
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        rhs = -g[self.free_idx]
        if self.m is not None:
            mf = self.m[self.free_idx]
            nz = np.flatnonzero(mf)
            rows = np.concatenate([rows, nz, np.full(nz.size, k)])
            cols = np.concatenate([cols, np.full(nz.size, k), nz])
            vals = np.concatenate([vals, mf[nz], mf[nz]])
            rhs = np.append(rhs, 0.0)
            k += 1
        A = sp.csc_matrix((vals, (rows, cols)), shape=(k, k))
        sol = spla.spsolve(A, rhs)
        d = np.zeros(self.n)
        d[self.free_idx] = sol[: self.free_idx.size]
        return d

    def line_search(self, u, d):
        delta = u[self.ea] - u[self.eb]
        dd = d[self.ea] - d[self.eb]
        slope_lin = float(self.lin @ d)

        def dphi(t):
            return kernels.line_phi(delta, dd, self.coef, self.p, t)[1] + slope_lin

        if not dphi(0.0) < 0.0:
            return 0.0
        hi = 1.0
        while dphi(hi) < 0.0:
            hi *= 2.0
            if hi > 1e12:
                return hi
        if dphi(hi) == 0.0:
            return hi
        return brentq(dphi, 0.0, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps,
                      maxiter=200)


def minimize_edge_energy(n, ea, eb, coef, p, lin, *, free=None, u0=None,
                         mean_weights=None, tol_grad=1e-10, tol_energy=1e-12,
                         max_iter=100_000, irls_epsilon=1e-12, method="irls",
                         descent_iters=2000):
    """Minimize the edge energy over the ``free`` nodes.

    Nodes outside ``free`` keep their value from ``u0``. With ``mean_weights``
    the iterates are kept on the slice ``mean_weights @ u == 0``; the energy
    must then be invariant under constants (compatible ``lin``).

    For p near 1 the stationarity test can sit below what double precision
    resolves (see ``_Problem.round_off_floor``); a run whose IRLS steps no
    longer decrease the energy is then accepted once its residual is under
    that floor, and the message says so.
    """
    free = np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=np.float64)
    prob = _Problem(n, np.asarray(ea), np.asarray(eb), np.asarray(coef, float), p,
                    lin, free, mean_weights)
    u = prob.project(u)
    energy, edge = prob.energy(u)
    history = [(energy, edge)]
    path = []
    g = prob.gradient(u)
    res = prob.residual(g)
    it = 0
    stalls = 0
    round_off = False
    descent_left = descent_iters if method == "descent" else 0
    if method not in ("irls", "descent"):
        raise ValueError(f"unknown method {method!r}")
    step = None
    while res > tol_grad and it < max_iter:
        it += 1
        if descent_left > 0:
            u_new, step = _descent_step(prob, u, g, energy, step)
            descent_left -= 1
            path.append("descent")
        else:
            d = prob.direction(u, g, irls_epsilon)
            t = prob.line_search(u, d)
            u_new = u + t * d
            path.append("irls")
        u_new = prob.project(u_new)
        e_new, edge_new = prob.energy(u_new)
        accepted = e_new <= energy + _ENERGY_SLACK * max(1.0, abs(energy), edge)
        if not accepted:
            # no admissible decrease along this direction
            u_new, e_new, edge_new = u, energy, edge
        g_new = prob.gradient(u_new)
        res_new = prob.residual(g_new)
        if path[-1] == "irls" and energy - e_new < tol_energy and res_new > 0.5 * res:
            stalls += 1
            if stalls >= 2 and res_new <= prob.round_off_floor(u_new):
                u, energy, edge, g, res = u_new, e_new, edge_new, g_new, res_new
                round_off = True
                break
            if stalls >= 2:
                log.debug("IRLS stalled at iteration %d (residual %.3e); "
                          "switching to gradient descent", it, res_new)
                descent_left = 50
                stalls = 0
        else:
            stalls = 0
        if accepted:
            history.append((e_new, edge_new))
        u, energy, edge, g, res = u_new, e_new, edge_new, g_new, res_new
    if res <= tol_grad and path and path[-1] == "descent":
        # a descent run stops as soon as the test passes; a few IRLS steps
        # sharpen it where the energy is degenerate (p > 2, small differences)
        for _ in range(_POLISH_STEPS):
            d = prob.direction(u, g, irls_epsilon)
            u_new = prob.project(u + prob.line_search(u, d) * d)
            e_new, edge_new = prob.energy(u_new)
            g_new = prob.gradient(u_new)
            res_new = prob.residual(g_new)
            if e_new > energy or res_new > tol_grad:
                break
            it += 1
            path.append("irls")
            history.append((e_new, edge_new))
            done = energy - e_new <= 0.0
            u, energy, edge, g, res = u_new, e_new, edge_new, g_new, res_new
            if done:
                break
    converged = res <= tol_grad or round_off
    if res <= tol_grad:
        msg = "converged"
    elif round_off:
        msg = (f"converged to the round-off floor: residual {res:.3e} > tol_grad "
               f"{tol_grad:.1e} is below {prob.round_off_floor(u):.3e}")
    else:
        msg = f"max_iter={max_iter} reached, residual {res:.3e}"
    return MinimizeResult(u=u, energy=energy, edge_energy=edge, iterations=it,
                          residual=res, converged=converged, message=msg,
                          history=history, path=path)


def _descent_step(prob, u, g, energy, step):
    d = -g
    if prob.m is not None:
        d = d - prob.m * (prob.m @ d) / (prob.m @ prob.m)
    gd = float(g @ d)
    if gd >= 0.0:
        return u, step
    if step is None:
        # inverse of the largest curvature scale of the quadratic case
        step = 1.0 / max(1e-300, float(np.max(np.abs(g))) + 1.0)
    t = 2.0 * step
    for _ in range(80):
        cand = u + t * d
        if prob.energy(cand)[0] <= energy + 1e-4 * t * gd:
            return cand, t
        t *= 0.5
    return u, t


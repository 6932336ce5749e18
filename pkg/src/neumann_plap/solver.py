"""Neumann problem for the discrete p-Laplacian by direct minimization.

The functional is ``I(u) = sum_e omega_e |du / len_e|^p + sum_z u(z) f(z) P(z)``
over the edges meeting the interior, minimized on the slice of functions with
``mu``-mean zero on the interior.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import kernels
from ._minimize import minimize_edge_energy, round_off_delta
from .calculus import GradientField, as_array, certified_trace_constant, upper_gradient

log = logging.getLogger(__name__)

ORACLE_MAX_NODES = 8


class CompatibilityError(ValueError):
    """Boundary data violate the compatibility condition."""

    def __init__(self, defect):
        self.defect = defect
        super().__init__(f"compatibility defect {defect:.17g}")


class ConvergenceError(RuntimeError):
    def __init__(self, solution):
        self.solution = solution
        super().__init__(solution.message)


@dataclass(frozen=True)
class SolverOptions:
    tol_grad: float = 1e-10
    tol_energy: float = 1e-12
    max_iter: int = 100_000
    tol_compat: float = 1e-10
    project_compat: bool = False
    irls_epsilon: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        for name in ("tol_grad", "tol_energy", "tol_compat", "irls_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class NeumannProblem:
    domain: object
    p: float
    f: np.ndarray
    options: SolverOptions = field(default_factory=SolverOptions)

    @property
    def load(self):
        """Linear coefficients ``f P`` of the boundary term."""
        return self.f * self.domain.perimeter

    def f_dict(self):
        d = self.domain
        return {d.ids[i]: float(self.f[i]) for i in d.boundary_idx}

    def edge_system(self):
        d = self.domain
        ea, eb, mask = d.energy_edges()
        coef = d.omega()[mask] / d.graph.length[mask] ** self.p
        return ea, eb, coef

    def mean_weights(self):
        return np.where(self.domain.interior, self.domain.mu, 0.0)

    def f_sup(self):
        return float(np.max(np.abs(self.f), initial=0.0))


@dataclass
class Solution:
    """Minimizer together with its energy breakdown and provenance."""

    u: np.ndarray
    gradient: GradientField
    energy: float
    dirichlet_part: float
    boundary_part: float
    iterations: int
    residual: float
    converged: bool
    message: str = ""
    method: str = "irls"
    history: list = field(default_factory=list, repr=False)
    path: list = field(default_factory=list, repr=False)


def assemble(domain, p, f, options=None):
    """Build a :class:`NeumannProblem`; boundary nodes missing from ``f`` get 0."""
    options = options or SolverOptions()
    if not p > 1 or not math.isfinite(p):
        raise ValueError("p must be a finite number > 1")
    vals = np.zeros(domain.n)
    items = f.items() if isinstance(f, dict) else (
        (domain.ids[i], f[i]) for i in domain.boundary_idx)
    for nid, val in items:
        i = domain.idx(nid)
        if not domain.boundary[i]:
            raise ValueError(f"boundary data given at non-boundary node {nid!r}")
        val = float(val)
        if not math.isfinite(val):
            raise ValueError(f"boundary data at {nid!r} is not finite")
        vals[i] = val
    P = domain.perimeter
    if options.project_compat:
        b = domain.boundary
        vals[b] -= np.sum(vals[b] * P[b]) / P[b].sum()
    defect = float(np.sum(vals * P))
    if abs(defect) > options.tol_compat * float(np.sum(np.abs(vals) * P)):
        raise CompatibilityError(defect)
    return NeumannProblem(domain, float(p), vals, options)


def energy(problem, u):
    """``(I, dirichlet, boundary)`` for the field ``u``."""
    u = as_array(problem.domain, u)
    ea, eb, coef = problem.edge_system()
    dirichlet = kernels.edge_energy(u, ea, eb, coef, problem.p)
    boundary = float(problem.load @ u)
    return dirichlet + boundary, dirichlet, boundary


def _gradient(problem, u):
    ea, eb, coef = problem.edge_system()
    return kernels.edge_force(u, ea, eb, coef, problem.p, problem.domain.n,
                              round_off_delta(u)) + problem.load


def euler_lagrange_residual(problem, u):
    """Largest discrete optimality defect on the interior and on the boundary."""
    u = as_array(problem.domain, u)
    g = np.abs(_gradient(problem, u))
    d = problem.domain
    return (float(np.max(g[d.interior], initial=0.0)),
            float(np.max(g[d.boundary], initial=0.0)))


def _finish(problem, res, method):
    d = problem.domain
    u = res.u.copy()
    u[d.exterior] = 0.0
    I, dirichlet, boundary = energy(problem, u)
    r_int, r_bnd = euler_lagrange_residual(problem, u)
    return Solution(u=u, gradient=upper_gradient(d, u), energy=I, dirichlet_part=dirichlet,
                    boundary_part=boundary, iterations=res.iterations,
                    residual=max(r_int, r_bnd), converged=res.converged,
                    message=res.message, method=method, history=res.history, path=res.path)


def solve(problem, u0=None, method="irls", raise_on_failure=False):
    """Mean-zero minimizer of ``I``.

    ``method="irls"`` runs reweighted least squares with an exact line search;
    ``method="descent"`` starts with a gradient-descent phase before the IRLS
    polish. Without ``u0`` the iteration starts from zero. Nonconvergence is
    reported through ``Solution.converged`` unless ``raise_on_failure``.
    """
    d = problem.domain
    opt = problem.options
    ea, eb, coef = problem.edge_system()
    start = np.zeros(d.n) if u0 is None else as_array(d, u0)
    res = minimize_edge_energy(
        d.n, ea, eb, coef, problem.p, problem.load, free=d.closed, u0=start,
        mean_weights=problem.mean_weights(), tol_grad=opt.tol_grad,
        tol_energy=opt.tol_energy, max_iter=opt.max_iter,
        irls_epsilon=opt.irls_epsilon, method=method)
    sol = _finish(problem, res, method)
    if not sol.converged:
        log.warning("solve did not converge: %s", sol.message)
        if raise_on_failure:
            raise ConvergenceError(sol)
    return sol


# -- a priori bounds -----------------------------------------------------------------


def trace_constant(problem):
    return certified_trace_constant(problem.domain, problem.p)


def energy_lower_bound(problem):
    """``-(p-1) (C_T ||f||_inf / p)^(p')``: the minimum over t of ``t^p - C_T ||f|| t``."""
    p = problem.p
    a = trace_constant(problem) * problem.f_sup()
    return -(p - 1.0) * (a / p) ** (p / (p - 1.0))


def gradient_lower_bound(problem, dirichlet):
    """``||g||^p - C_T ||g|| ||f||_inf`` with ``||g|| = dirichlet^(1/p)``."""
    g = dirichlet ** (1.0 / problem.p)
    return dirichlet - trace_constant(problem) * g * problem.f_sup()


# -- oracle ------------------------------------------------------------------------


def oracle_minimize(problem, tol=1e-14, max_sweeps=2_000_000, backend=None):
    """Brute-force minimizer for instances with at most eight nodes.

    Golden-section coordinate search over the closed-domain node values; the
    energy is invariant under constants, so the iterate is projected onto the
    mean-zero slice at the end. Independent of the IRLS machinery.
    """
    d = problem.domain
    if d.n > ORACLE_MAX_NODES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_NODES} nodes, got {d.n}")
    ea, eb, coef = problem.edge_system()
    keep = coef > 0
    ea, eb, coef = ea[keep], eb[keep], coef[keep]
    A = sp.coo_matrix((np.concatenate([coef, coef]),
                       (np.concatenate([ea, eb]), np.concatenate([eb, ea]))),
                      shape=(d.n, d.n)).tocsr()
    A.sort_indices()
    impl = kernels if backend is None else kernels.backend_module(backend)
    u = np.zeros(d.n)
    free = d.closed.astype(np.uint8)
    sweeps, _, converged = impl.coordinate_descent(
        u, A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(np.float64),
        problem.load.astype(np.float64), free, problem.p, tol, 1e-12, max_sweeps)
    m = problem.mean_weights()
    u -= (m @ u) / m.sum()
    u[d.exterior] = 0.0
    I, dirichlet, boundary = energy(problem, u)
    r_int, r_bnd = euler_lagrange_residual(problem, u)
    return Solution(u=u, gradient=upper_gradient(d, u), energy=I, dirichlet_part=dirichlet,
                    boundary_part=boundary, iterations=int(sweeps),
                    residual=max(r_int, r_bnd), converged=bool(converged),
                    message="converged" if converged else "sweep limit reached",
                    method="oracle")


# -- minimizer set -------------------------------------------------------------------


@dataclass
class MinimizerSetReport:
    runs: int
    energies: list
    methods: list
    max_gradient_diff: float
    max_boundary_diff: float
    max_lattice_gap: float
    max_convex_gap: float
    passed: bool
    witness: dict | None = None
    gradient_resolution: float = 0.0
    boundary_resolution: float = 0.0
    status: str = "pass"
    unique_note: str = ("the discrete edge energy is strictly convex modulo constants, so "
                        "the discrete minimizer is unique; uniqueness for the continuous "
                        "problem is not implied")

    @property
    def breach(self):
        return self.status == "breach"


def _normalize(problem, u):
    m = problem.mean_weights()
    return u - (m @ u) / m.sum()


def convexity_resolution(problem, u, v):
    """Certified per-edge bound on ``|a - b|`` for the edge quotients of ``u`` and ``v``.

    With ``G = (D(u) + D(v))/2 - D((u+v)/2)`` (Dirichlet parts; the linear
    term cancels), Clarkson's inequality gives ``w |(a-b)/2|^p <= G`` per edge
    for ``p >= 2``. For ``1 < p < 2`` the second derivative of ``|t|^p`` is at
    least ``p(p-1)(|a|+|b|)^(p-2)`` between ``a`` and ``b``, so
    ``p(p-1)/8 w (a-b)^2 (|a|+|b|)^(p-2) <= G``. ``G`` is padded by its
    round-off. Near-minimizers have small ``G``, so the bound measures how
    sharply the computed energies pin down the gradient.
    """
    d = problem.domain
    p = problem.p
    ea, eb, mask = d.energy_edges()
    w = d.omega()[mask]
    ln = d.graph.length[mask]
    a = (u[ea] - u[eb]) / ln
    b = (v[ea] - v[eb]) / ln
    m = 0.5 * (a + b)
    Du, Dv = np.sum(w * np.abs(a) ** p), np.sum(w * np.abs(b) ** p)
    G = max(0.5 * (Du + Dv) - np.sum(w * np.abs(m) ** p), 0.0)
    G += 16 * np.finfo(float).eps * (Du + Dv)
    pos = w > 0
    bound = np.full(a.shape, np.inf)
    if p >= 2:
        bound[pos] = 2.0 * (G / w[pos]) ** (1.0 / p)
    else:
        s = np.abs(a[pos]) + np.abs(b[pos])
        bound[pos] = np.sqrt(8.0 * G * s ** (2.0 - p) / (p * (p - 1.0) * w[pos]))
    return np.abs(a - b), bound, a, b


def verify_minimizer_set(problem, runs=4, seed=0, tol_grad=1e-6, tol_energy=1e-8):
    """Solve from independent starts and check the minimizer-set laws.

    Runs alternate between the IRLS and the descent path; every run after the
    first starts from a seeded random field. Checked pairwise: edge quotients
    agree, boundary parts agree, the normalized lattice combinations
    ``max(u, v)`` and ``min(u, v)`` and convex combinations are minimizers.

    ``passed`` applies the fixed tolerances. When they fail only where the
    computed energies cannot resolve the gradient (see
    :func:`convexity_resolution`) the status is ``"resolution-limited"``;
    anything beyond the certified bounds is a ``"breach"``.
    """
    if runs < 2:
        raise ValueError("need at least two runs")
    d = problem.domain
    p = problem.p
    rng = np.random.default_rng(seed)
    sols = []
    for k in range(runs):
        u0 = None if k == 0 else rng.standard_normal(d.n) * (1.0 + k)
        sols.append(solve(problem, u0=u0, method="irls" if k % 2 == 0 else "descent"))
    I = min(s.energy for s in sols)
    closure = d.closure_edges()
    ea, eb, emask = d.energy_edges()
    w = d.omega()[emask]
    worst = {"grad": 0.0, "bnd": 0.0, "lattice": 0.0, "convex": 0.0, "gres": 0.0, "bres": 0.0}
    witness = None
    passed = all(s.converged for s in sols)
    breach = False
    for i, j in itertools.combinations(range(runs), 2):
        u, v = sols[i].u, sols[j].u
        gdiff = float(np.max(np.abs(sols[i].gradient.edge_quotients[closure]
                                    - sols[j].gradient.edge_quotients[closure]), initial=0.0))
        bdiff = abs(sols[i].boundary_part - sols[j].boundary_part)
        lat = max(abs(energy(problem, _normalize(problem, x))[0] - I)
                  for x in (np.maximum(u, v), np.minimum(u, v)))
        cvx = max(abs(energy(problem, t * u + (1 - t) * v)[0] - I) for t in (0.25, 0.5, 0.75))
        diff, bound, a, b = convexity_resolution(problem, u, v)
        top = np.maximum(np.abs(a), np.abs(b)) + bound
        # |D(u) - D(v)| <= sum w p max(|a|,|b|)^(p-1) |a - b| by the mean value theorem
        bres = abs(sols[i].energy - sols[j].energy) + float(
            np.sum(w * p * top ** (p - 1.0) * bound))
        gres = float(np.max(bound, initial=0.0))
        vals = (("grad", gdiff), ("bnd", bdiff), ("lattice", lat), ("convex", cvx),
                ("gres", gres), ("bres", bres))
        for key, val in vals:
            worst[key] = max(worst[key], val)
        strict_bad = gdiff > tol_grad or bdiff > tol_energy or lat > tol_energy or cvx > tol_energy
        hard_bad = (bool(np.any(diff > np.maximum(bound, tol_grad)))
                    or bdiff > max(bres, tol_energy) or lat > tol_energy or cvx > tol_energy)
        if strict_bad:
            passed = False
            if witness is None or (hard_bad and not breach):
                witness = {"pair": [i, j], "gradient_diff": gdiff, "boundary_diff": bdiff,
                           "lattice_gap": lat, "convex_gap": cvx, "gradient_resolution": gres,
                           "boundary_resolution": bres}
        breach |= hard_bad
    if breach:
        status = "breach"
    elif passed:
        status = "pass"
    elif all(s.converged for s in sols):
        status = "resolution-limited"
    else:
        status = "not converged"
    return MinimizerSetReport(runs, [s.energy for s in sols], [s.method for s in sols],
                              worst["grad"], worst["bnd"], worst["lattice"], worst["convex"],
                              passed, witness, worst["gres"], worst["bres"], status)


def with_options(problem, **changes):
    return replace(problem, options=replace(problem.options, **changes))

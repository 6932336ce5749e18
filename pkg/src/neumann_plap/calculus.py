"""Discrete Newtonian calculus on a :class:`~neumann_plap.space.Domain`.

Two gradient notions are used. Edge quotients ``|u(x) - u(y)| / len`` drive
the energy; the node upper gradient (largest incident edge quotient) plays
the role of the upper gradient ``g_u`` in De Giorgi-type estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


def as_array(domain, u):
    """Node values as a float array indexed like the graph.

    ``u`` may be an array or a map node-id -> value; a map must cover every
    node of the closed domain (exterior nodes default to 0).
    """
    if isinstance(u, dict):
        out = np.zeros(domain.n)
        seen = np.zeros(domain.n, dtype=bool)
        for nid, val in u.items():
            i = domain.idx(nid)
            out[i] = float(val)
            seen[i] = True
        missing = np.flatnonzero(domain.closed & ~seen)
        if missing.size:
            raise ValueError(f"field has no value at node {domain.ids[missing[0]]!r}")
    else:
        out = np.array(u, dtype=np.float64)
        if out.shape != (domain.n,):
            raise ValueError(f"field has shape {out.shape}, expected ({domain.n},)")
    if not np.all(np.isfinite(out[domain.closed])):
        raise ValueError("field values must be finite")
    return out


def to_dict(domain, values, mask=None):
    sel = domain.closed if mask is None else mask
    return {domain.ids[i]: float(values[i]) for i in np.flatnonzero(sel)}


@dataclass
class GradientField:
    """Edge quotients (graph edge order) and node upper gradient."""

    edge_quotients: np.ndarray
    node_upper: np.ndarray

    def edges_dict(self, domain):
        g = domain.graph
        return {f"{g.ids[a]}|{g.ids[b]}": float(q)
                for a, b, q in zip(g.ea, g.eb, self.edge_quotients)}


def edge_quotients(domain, u):
    g = domain.graph
    q = np.abs(u[g.ea] - u[g.eb]) / g.length
    q[~domain.closure_edges()] = 0.0
    return q


def node_upper_gradient(domain, u):
    """Largest incident edge quotient at every node (closed-domain edges only)."""
    g = domain.graph
    return kernels.node_max(edge_quotients(domain, np.asarray(u, float)), g.ea, g.eb, g.n)


def upper_gradient(domain, u):
    u = as_array(domain, u)
    q = edge_quotients(domain, u)
    g = domain.graph
    return GradientField(q, kernels.node_max(q, g.ea, g.eb, g.n))


def dirichlet_energy(domain, u, p):
    """``sum_e omega_e (|du| / len_e)^p`` over the energy edges."""
    g = domain.graph
    _, _, mask = domain.energy_edges()
    q = np.abs(u[g.ea[mask]] - u[g.eb[mask]]) / g.length[mask]
    return float(np.sum(domain.omega()[mask] * q ** p))


def newtonian_norm(domain, u, p):
    """``(||u||_{L^p(Omega)}, energy-consistent ||g_u||_{L^p})``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    u = as_array(domain, u)
    ii = domain.interior
    lp = float(np.sum(np.abs(u[ii]) ** p * domain.mu[ii])) ** (1.0 / p)
    return lp, dirichlet_energy(domain, u, p) ** (1.0 / p)


def trace(domain, u):
    """Boundary restriction ``Tu``; discretely the boundary node values."""
    u = as_array(domain, u)
    return to_dict(domain, u, domain.boundary)


def trace_ball_average(domain, u, z, r):
    """Interior average of ``u`` over ``B(z, r)``."""
    u = as_array(domain, u)
    b = domain.ball_mask(domain.idx(z), r) & domain.interior
    m = domain.mu[b].sum()
    if not m > 0:
        raise ValueError(f"B({z}, {r}) carries no interior measure: radius below resolution")
    return float(np.sum(u[b] * domain.mu[b]) / m)


def boundary_integral(domain, h):
    """``sum_z h(z) P(z)`` over the boundary nodes."""
    if isinstance(h, dict):
        vals = np.zeros(domain.n)
        for i in domain.boundary_idx:
            nid = domain.ids[i]
            if nid not in h:
                raise KeyError(f"missing boundary value at {nid!r}")
            vals[i] = float(h[nid])
    else:
        vals = np.asarray(h, dtype=np.float64)
    b = domain.boundary
    return float(np.sum(vals[b] * domain.perimeter[b]))


def _random_fields(domain, trials, seed):
    rng = np.random.default_rng(seed)
    fields = [rng.standard_normal(domain.n) for _ in range(trials)]
    if domain.graph.coords is not None:
        fields += [domain.graph.coords[:, k].copy() for k in range(domain.graph.coords.shape[1])]
    return fields


def sobolev_ratio(domain, u, p):
    """``||u - u_Omega||_{L^p(Omega)} / ||g_u||_p`` (nan for locally constant u)."""
    u = as_array(domain, u)
    ii = domain.interior
    w = domain.mu[ii]
    mean = np.sum(u[ii] * w) / w.sum()
    num = float(np.sum(np.abs(u[ii] - mean) ** p * w)) ** (1.0 / p)
    den = dirichlet_energy(domain, u, p) ** (1.0 / p)
    return num / den if den > 0 else math.nan


def check_sobolev_embedding(domain, p, trials=20, seed=0, fields=None):
    """Sampled lower bound for the Sobolev-type embedding constant on Omega."""
    if not p > 1:
        raise ValueError("p must be > 1")
    if domain.interior.sum() < 2:
        raise ValueError("embedding check needs at least two interior nodes")
    fields = _random_fields(domain, trials, seed) if fields is None else fields
    ratios = [r for r in (sobolev_ratio(domain, u, p) for u in fields) if not math.isnan(r)]
    if not ratios:
        raise ValueError("every sampled field was constant")
    return float(max(ratios))


def certified_trace_constant(domain, p):
    """Constant ``C_T`` with ``|sum_z u(z) h(z) P(z)| <= C_T ||h||_inf ||g_u||``.

    Valid for every ``u`` with ``mu``-mean zero on Omega, ``||g_u||`` being the
    energy-consistent gradient norm. The mean-zero ``u`` changes sign on Omega,
    so ``|u(z)|`` is bounded by the total variation over the (connected)
    energy graph; Holder's inequality then splits off the energy.
    """
    q = p / (p - 1.0)
    g = domain.graph
    _, _, mask = domain.energy_edges()
    w = domain.omega()[mask]
    K = float(np.sum(g.length[mask] ** q * w ** (-q / p))) ** (1.0 / q)
    return float(domain.perimeter.sum()) * K


@dataclass
class TraceExponents:
    p: float
    p_tilde: float
    p_star: float
    eps: float
    aleph: float


def trace_exponents(s, p, p_tilde, ahlfors=False):
    """Exponent bookkeeping for the trace inequality."""
    if not p < s:
        raise ValueError("trace exponents need p < s (p* is infinite otherwise)")
    p_star = p * (s - 1.0) / (s - p)
    if not p < p_tilde < p_star:
        raise ValueError(f"p_tilde={p_tilde} outside the window ({p}, {p_star})")
    eps = 0.0 if ahlfors else (s - 1.0) * (1.0 / p_tilde - 1.0 / p_star) / 2.0
    aleph = s * (1.0 / p - 1.0 / p_tilde) + eps
    return TraceExponents(p, p_tilde, p_star, eps, aleph)


@dataclass
class TraceReport:
    exponents: TraceExponents
    max_ratio: float
    samples: int
    witness: tuple | None
    finite: bool
    gradient: str = "node_upper"


def check_trace_inequality(domain, p, p_tilde, diag, trials=10, seed=0, radii=None):
    """Largest sampled ratio ``||Tu||_{L^p~(dOmega & B)} / RHS`` over boundary balls.

    ``RHS = r^(1 - 1/p~ - aleph) ||g_u||_{L^p(Omega & B)}
    + P(B)^(1/p~) / mu(Omega & B) ||u||_{L^1(Omega & B)}``, with the node
    upper gradient.
    """
    from .space import default_radii

    ex = trace_exponents(diag.mass_exponent, p, p_tilde, diag.ahlfors_scale > 0)
    radii = default_radii(domain) if radii is None else radii
    fields = _random_fields(domain, trials, seed) + [np.ones(domain.n)]
    ii, bb = domain.interior, domain.boundary
    best, witness, count = 0.0, None, 0
    for k, u in enumerate(fields):
        g = node_upper_gradient(domain, u)
        for z in domain.boundary_idx:
            d = domain.graph.dist_from(z)
            for r in radii:
                ball = d < r * (1 - 1e-12)
                bi, bbd = ball & ii, ball & bb
                m = domain.mu[bi].sum()
                if not m > 0:
                    continue
                lhs = float(np.sum(np.abs(u[bbd]) ** p_tilde * domain.perimeter[bbd])) ** (
                    1.0 / p_tilde)
                grad = float(np.sum(g[bi] ** p * domain.mu[bi])) ** (1.0 / p)
                l1 = float(np.sum(np.abs(u[bi]) * domain.mu[bi]))
                rhs = (r ** (1.0 - 1.0 / p_tilde - ex.aleph) * grad
                       + domain.perimeter[bbd].sum() ** (1.0 / p_tilde) / m * l1)
                if rhs == 0.0:
                    continue
                count += 1
                ratio = lhs / rhs
                if ratio > best:
                    best, witness = ratio, (k, domain.ids[z], float(r))
    return TraceReport(ex, best, count, witness, bool(math.isfinite(best)))

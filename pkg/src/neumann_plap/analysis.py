"""De Giorgi harness and boundary-regularity probes.

Every gradient here is the node upper gradient (largest incident edge
quotient). Balls are open; ``A(k, r)`` is the set of nodes of ``B(x, r)`` in
the closed domain where ``u > k``. All constants written ``C`` are empirical
budgets measured on the data, not the unknown constants of the theory.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._parallel import parallel_map
from .calculus import as_array, node_upper_gradient, trace_exponents

log = logging.getLogger(__name__)

_EXACT_TOL = 1e-12


class TheoryInapplicable(ValueError):
    """The requested regime lies outside the hypotheses of the theory."""


class HypothesisRefused(ValueError):
    """A check was asked for where its sign hypothesis on f fails."""


def _u(domain, solution):
    return as_array(domain, getattr(solution, "u", solution))


def _f(domain, f):
    if isinstance(f, dict):
        out = np.zeros(domain.n)
        for nid, val in f.items():
            out[domain.idx(nid)] = float(val)
        return out
    if hasattr(f, "f") and hasattr(f, "domain"):
        return np.asarray(f.f, dtype=np.float64)
    return np.asarray(f, dtype=np.float64)


def _x(domain, x):
    return x if isinstance(x, (int, np.integer)) else domain.idx(x)


def _radius_grid(domain, r_max, r_min):
    """Dyadic radii r_max, r_max/2, ... down to r_min."""
    out = []
    r = r_max
    while r >= r_min and r > 0:
        out.append(r)
        r /= 2.0
    return out


# -- level sets --------------------------------------------------------------------


@dataclass
class LevelSetStats:
    k: float
    x: str
    r: float
    R: float
    A_measure: float
    A_perimeter: float
    u_kr: float
    psi_kR: float
    M_R: float
    m_R: float


def _ball(domain, xi, r):
    return domain.ball_mask(xi, r)


def _u_kr(domain, u, ball, k, p):
    inside = ball & domain.interior
    m = domain.mu[inside].sum()
    if not m > 0:
        raise ValueError("B(x,r) meets no interior measure")
    return float(np.sum(np.maximum(u[inside] - k, 0.0) ** p * domain.mu[inside]) / m) ** (1 / p)


def _psi_kR(domain, u, ball, k):
    bnd = ball & domain.boundary
    P = domain.perimeter[bnd].sum()
    if not P > 0:
        raise ValueError("B(x,R) meets no boundary node")
    return float(np.sum(np.maximum(u[bnd] - k, 0.0) * domain.perimeter[bnd]) / P)


def level_set_stats(domain, u, x, k, r, R, p):
    """``A(k,r)`` measures, ``u(k,r)``, ``psi(k,R)`` and ``M(R)``, ``m(R)`` at ``x``."""
    if r > R:
        raise ValueError("need r <= R")
    u = _u(domain, u)
    xi = _x(domain, x)
    br, bR = _ball(domain, xi, r), _ball(domain, xi, R)
    inside_R = bR & domain.interior
    if not inside_R.any():
        raise ValueError("B(x,R) meets no interior node")
    above = u > k
    return LevelSetStats(
        k=float(k), x=domain.ids[xi], r=float(r), R=float(R),
        A_measure=float(domain.mu[br & domain.interior & above].sum()),
        A_perimeter=float(domain.perimeter[br & domain.boundary & above].sum()),
        u_kr=_u_kr(domain, u, br, k, p),
        psi_kR=_psi_kR(domain, u, bR, k),
        M_R=float(u[inside_R].max()), m_R=float(u[inside_R].min()))


@dataclass
class MarkovCheck:
    measure_lhs: float
    measure_rhs: float
    perimeter_lhs: float
    perimeter_rhs: float

    @property
    def holds(self):
        scale = max(1.0, self.measure_rhs, self.perimeter_rhs)
        return (self.measure_lhs <= self.measure_rhs + _EXACT_TOL * scale
                and self.perimeter_lhs <= self.perimeter_rhs + _EXACT_TOL * scale)


def markov_bounds(domain, u, x, h, k, r, p):
    """Both level-set Markov inequalities for ``h < k`` on ``B(x, r)``.

    ``(k-h)^p mu(A(k,r)) <= mu(B & Omega) u(h,r)^p`` and
    ``(k-h) P(A(k,r) & dOmega) <= P(B & dOmega) psi(h,r)``.
    """
    if not h < k:
        raise ValueError("need h < k")
    st_k = level_set_stats(domain, u, x, k, r, r, p)
    st_h = level_set_stats(domain, u, x, h, r, r, p)
    xi = _x(domain, x)
    b = _ball(domain, xi, r)
    mu_b = float(domain.mu[b & domain.interior].sum())
    P_b = float(domain.perimeter[b & domain.boundary].sum())
    return MarkovCheck((k - h) ** p * st_k.A_measure, mu_b * st_h.u_kr ** p,
                       (k - h) * st_k.A_perimeter, P_b * st_h.psi_kR)


# -- cutoff ---------------------------------------------------------------------------


def cutoff(domain, x, r, R):
    """``eta(y) = (1 - dist(y, B(x,r)) / (R - r))_+`` with graph distances.

    The distance to the ball is ``(d(x,y) - r)_+`` (the graph is a length
    space up to edge resolution), so eta is 1 on ``B(x,r)``, 0 off
    ``B(x,R)`` and linear in ``d(x, .)`` in between.
    """
    if not 0 < r < R:
        raise ValueError("cutoff needs 0 < r < R")
    d = domain.graph.dist_from(_x(domain, x))
    eta = np.clip(1.0 - np.maximum(d - r, 0.0) / (R - r), 0.0, 1.0)
    eta[domain.ball_mask(_x(domain, x), r)] = 1.0
    eta[~np.isfinite(d)] = 0.0
    return eta


def cutoff_slack(domain, eta, r, R):
    """Amount by which edge quotients of ``eta`` exceed ``1 / (R - r)``."""
    g = domain.graph
    q = np.abs(eta[g.ea] - eta[g.eb]) / g.length
    return max(0.0, float(q.max(initial=0.0)) - 1.0 / (R - r))


# -- De Giorgi inequality ---------------------------------------------------------------


@dataclass
class DeGiorgiRow:
    x: str
    r: float
    R: float
    k: float
    lhs: float
    rhs_volume: float
    rhs_boundary: float

    @property
    def rhs(self):
        return self.rhs_volume + self.rhs_boundary

    @property
    def ratio(self):
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf


@dataclass
class DeGiorgiReport:
    rows: list
    max_ratio: float
    c_budget: float
    vacuous_violations: list
    passed: bool
    gradient: str = "node_upper"

    @property
    def measured_constant(self):
        return max(1.0, self.max_ratio)


def degiorgi_row(domain, u, f, p, x, r, R, k):
    """LHS and both RHS terms of the Caccioppoli-type inequality at one tuple."""
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    xi = _x(domain, x)
    w = np.maximum(u - k, 0.0)
    w[domain.exterior] = 0.0
    g = node_upper_gradient(domain, w)
    br, bR = _ball(domain, xi, r), _ball(domain, xi, R)
    ir, iR, bb = br & domain.interior, bR & domain.interior, bR & domain.boundary
    lhs = float(np.sum(g[ir] ** p * domain.mu[ir]))
    vol = float(np.sum(w[iR] ** p * domain.mu[iR])) / (R - r) ** p
    bdry = float(np.sum(np.abs(f[bb]) * w[bb] * domain.perimeter[bb]))
    return DeGiorgiRow(domain.ids[xi], float(r), float(R), float(k), lhs, vol, bdry)


def degiorgi_samples(domain, u, count, seed=0):
    """Random ``(x, r, R, k)`` tuples at boundary centres.

    ``R - r`` exceeds two edge lengths, so every edge met by ``B(x, r)`` and
    its neighbours lies inside ``B(x, R)``; closer radii only measure the
    graph resolution. Every eighth tuple uses a level above ``max u``.
    """
    u = _u(domain, u)
    rng = np.random.default_rng(seed)
    ell = domain.max_edge_length()
    top = max(domain.diameter(domain.closed) / 2.0, 4.0 * ell)
    bidx = domain.boundary_idx
    out = []
    for j in range(count):
        xi = int(rng.choice(bidx))
        R = float(rng.uniform(3.0 * ell, top))
        r = float(rng.uniform(0.25 * ell, R - 2.0 * ell)) * (1 - 1e-9)
        vals = u[domain.ball_mask(xi, R) & domain.closed]
        if j % 8 == 7:
            k = float(u[domain.closed].max()) + 1.0
        else:
            k = float(np.quantile(vals, rng.uniform(0.0, 0.95)))
        out.append((domain.ids[xi], r, R, k))
    return out


def check_degiorgi(domain, solution, f, p, sample, c_budget=1e3, threads=1):
    """Largest ratio LHS / RHS over ``sample`` tuples ``(x, r, R, k)``.

    A row with ``RHS = 0`` must have ``LHS = 0``; anything else is a hard
    failure recorded in ``vacuous_violations``.
    """
    u = _u(domain, solution)
    fa = _f(domain, f)
    rows = parallel_map(lambda t: degiorgi_row(domain, u, fa, p, *t), sample, threads)
    bad = [r for r in rows if r.rhs == 0 and r.lhs > 0]
    finite = [r.ratio for r in rows if r.rhs > 0]
    max_ratio = float(max(finite, default=0.0))
    passed = not bad and max_ratio <= c_budget
    return DeGiorgiReport(rows, max_ratio, c_budget, bad, passed)


# -- exponents ------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentConfig:
    kappa: float | None = None
    kappa_tilde: float | None = None
    nu: int = 3
    C: float = 1.0
    ahlfors: bool = False


@dataclass
class DeGiorgiParams:
    s: float
    p: float
    kappa: float
    kappa_tilde: float
    alpha: float
    beta: float
    aleph: float
    p_tilde: float
    sigma: float
    tau: float
    nu: int
    D: float
    C: float
    eligible: bool
    C_f: float = math.nan
    d: float = math.nan
    theta0: float = math.nan
    lambda1: float = math.nan
    lambda2: float = math.nan
    tau_window: tuple = (math.nan, math.nan)


def _midpoint(lo, hi):
    return 0.5 * (lo + hi)


def compute_exponents(s, p, config=None):
    """Exponent bundle for the boundedness and continuity iterations.

    ``kappa`` defaults to the midpoint of ``(max(1, p), s/(s-p))`` when
    ``p^2 - sp + s > 0`` (so that ``alpha + 1/p - 1 > 0``) and of
    ``(1, s/(s-p))`` otherwise; ``kappa_tilde`` to the midpoint of
    ``(1, (s-1)/(s-p))``. For eligible pairs sigma is the explicit maximum
    and tau the midpoint of its window.
    """
    config = config or ExponentConfig()
    if not p > 1:
        raise ValueError("p must be > 1")
    if not s > 1:
        raise ValueError("s must be > 1")
    if p >= s:
        raise TheoryInapplicable("theory inapplicable for this regime (p >= s)")
    if config.nu < 3:
        raise ValueError("nu must be >= 3")
    eligible = p * p - s * p + s > 0
    k_hi = s / (s - p)
    kt_hi = (s - 1.0) / (s - p)
    k_lo = max(1.0, p) if eligible else 1.0
    kappa = config.kappa if config.kappa is not None else _midpoint(k_lo, k_hi)
    kappa_t = config.kappa_tilde if config.kappa_tilde is not None else _midpoint(1.0, kt_hi)
    if not 1 < kappa < k_hi:
        raise ValueError(f"kappa={kappa} outside (1, {k_hi})")
    if not 1 < kappa_t < kt_hi:
        raise ValueError(f"kappa_tilde={kappa_t} outside (1, {kt_hi})")
    alpha = 1.0 - 1.0 / kappa
    beta = 1.0 - 1.0 / (kappa_t * p)
    ex = trace_exponents(s, p, kappa_t * p, ahlfors=config.ahlfors)
    C = max(1.0, float(config.C))
    D = max(2.0, C ** (1.0 / alpha), C ** (1.0 / beta))
    params = DeGiorgiParams(s=float(s), p=float(p), kappa=kappa, kappa_tilde=kappa_t,
                            alpha=alpha, beta=beta, aleph=ex.aleph, p_tilde=ex.p_tilde,
                            sigma=math.nan, tau=math.nan, nu=int(config.nu), D=D, C=C,
                            eligible=bool(eligible))
    if not eligible:
        return params
    g = 1.0 / p - 1.0
    sigma = max((alpha + 1.0) / alpha,
                1.0 + beta + beta * (1.0 - beta) / (beta + g),
                (1.0 + beta) / (1.0 - p * (1.0 - alpha) * (1.0 - beta)))
    lo = max(beta / (beta + g), p * (sigma - (sigma - 1.0) * alpha))
    hi = (sigma - (1.0 + beta)) / (1.0 - beta)
    # the window is often a single point; allow for round-off in its ends
    if lo > hi + _EXACT_TOL * max(1.0, abs(hi)):
        raise ValueError(f"empty tau window [{lo!r}, {hi!r}] at s={s}, p={p}")
    params.sigma = sigma
    params.tau = _midpoint(lo, hi) if lo < hi else hi
    params.tau_window = (lo, hi)
    return params


def effective_dimension(s_fit, p):
    """Mass exponent handed to :func:`compute_exponents`.

    A lower mass bound with exponent ``s`` also holds with any larger
    exponent, so when the fitted ``s`` does not exceed ``p`` the exponent
    ``p + 1`` is used instead; it keeps ``p < s`` and makes
    ``p^2 - sp + s = 1``.
    """
    return float(s_fit) if s_fit > p else float(p) + 1.0


def sigma_tau_conditions(params):
    """Slack of each sigma/tau condition; non-negative means satisfied."""
    a, b, p = params.alpha, params.beta, params.p
    sig, tau = params.sigma, params.tau
    return {
        "sigma >= (alpha+1)/alpha": sig - (a + 1.0) / a,
        "tau >= p[sigma(1-alpha)+alpha]": tau - p * (sig * (1.0 - a) + a),
        "tau >= beta/(beta+1/p-1)": tau - b / (b + 1.0 / p - 1.0),
        "tau <= (sigma-(1+beta))/(1-beta)": (sig - (1.0 + b)) / (1.0 - b) - tau,
        "alpha+1/p-1 > 0": a + 1.0 / p - 1.0,
        "beta+1/p-1 > 0": b + 1.0 / p - 1.0,
    }


def conditions_hold(params, tol=_EXACT_TOL):
    checks = sigma_tau_conditions(params)
    return all(v >= -tol * max(1.0, abs(params.sigma), abs(params.tau))
               for v in checks.values())


# -- decay estimates -----------------------------------------------------------------------


@dataclass
class DecayBounds:
    u_measured: float
    u_bound: float
    psi_measured: float
    psi_bound_general: float
    psi_bound_ahlfors: float


def decay_estimate_bounds(domain, u, f, x, h, k, r, R, params, C=1.0):
    """Measured ``u(k,r)``, ``psi(k,r)`` against the decay-estimate right sides.

    The general psi bound carries ``R^(1-aleph)`` and ``R^(1-1/p-aleph)``; the
    Ahlfors-regular variant replaces them with ``R`` and ``R^(1-1/p)``.
    """
    if not h < k:
        raise ValueError("need h < k")
    u = _u(domain, u)
    fa = _f(domain, f)
    xi = _x(domain, x)
    p, a, b, al = params.p, params.alpha, params.beta, params.aleph
    bR = _ball(domain, xi, R)
    Cf = float(np.max(np.abs(fa[bR & domain.boundary]), initial=0.0)) ** (1.0 / p)
    br = _ball(domain, xi, r)
    uh, ph = _u_kr(domain, u, bR, h, p), _psi_kR(domain, u, bR, h)
    u_meas, p_meas = _u_kr(domain, u, br, k, p), _psi_kR(domain, u, br, k)
    u_bound = C * (uh / (k - h)) ** a * (R / (R - r) * uh + Cf * R ** (1 - 1 / p) * ph ** (1 / p))
    pre = C * (ph / (k - h)) ** b
    general = pre * (R ** (1 - al) / (R - r) * uh + Cf * R ** (1 - 1 / p - al) * ph ** (1 / p))
    strong = pre * (R / (R - r) * uh + Cf * R ** (1 - 1 / p) * ph ** (1 / p))
    return DecayBounds(u_meas, u_bound, p_meas, general, strong)


# -- boundedness ------------------------------------------------------------------------------


@dataclass
class BoundednessReport:
    x: str
    R: float
    k0: float
    C: float
    C_f: float
    C_fR: float
    d_est1: float
    d_est2: float
    d_formula: float
    enlarge_factor: float
    d_used: float
    rows: list
    truncated_at: int | None
    sup_half_ball: float
    final_holds: bool
    final_holds_formula_d: bool
    passed: bool
    notes: list = field(default_factory=list)


def boundedness_iteration(domain, solution, f, x, R, params, k0=0.0, n_max=30, C=None):
    """Run the level/radius iteration ``r_n = (1 + 2^-n) R/2``, ``k_n = k0 + d(1 - 2^-n)``.

    ``d`` is the larger of the two explicit lower bounds, built with the
    measured constant ``C`` (default ``params.C``). The measured sequences are
    compared with ``2^(-sigma n) u(k0,R)`` and ``2^(-tau n) psi(k0,R)``; when
    they fail, ``d`` is doubled until they hold and the factor is reported.
    The final claim ``sup u <= k0 + d`` on ``B(x, R/2) & Omega`` is checked on
    the nodes directly.
    """
    u = _u(domain, solution)
    fa = _f(domain, f)
    xi = _x(domain, x)
    p, a, b, al = params.p, params.alpha, params.beta, params.aleph
    sig, tau = params.sigma, params.tau
    if not (math.isfinite(sig) and math.isfinite(tau)):
        raise TheoryInapplicable("boundedness iteration needs eligible exponents")
    C = params.C if C is None else max(1.0, C)
    notes = []
    diam = domain.diameter(domain.closed)
    if not 0 < R < diam / 4:
        notes.append(f"R={R:g} outside (0, diam/4={diam / 4:g})")
    bR = _ball(domain, xi, R)
    Cf = float(np.max(np.abs(fa[bR & domain.boundary]), initial=0.0)) ** (1.0 / p)
    CfR = C * (1 + Cf * R ** (1 - 1 / p) + R ** -al + Cf * R ** (1 - 1 / p - al))
    u0 = _u_kr(domain, u, bR, k0, p)
    psi0 = _psi_kR(domain, u, bR, k0)
    lift = u0 + psi0 ** (1 / p)
    d1 = (CfR * 2 ** tau * lift / psi0 ** (1 - b)) ** (1 / b) if psi0 > 0 else 0.0
    d2 = (CfR * 2 ** sig * lift / u0 ** (1 - a)) ** (1 / a) if u0 > 0 else 0.0
    d_formula = max(d1, d2)

    unresolved = []

    def run(d):
        unresolved.clear()
        rows, ok = [], True
        for n in range(n_max + 1):
            rn = (1 + 2.0 ** -n) * R / 2
            kn = k0 + d * (1 - 2.0 ** -n)
            bn = _ball(domain, xi, rn)
            if not (domain.mu[bn & domain.interior].sum() > 0
                    and domain.perimeter[bn & domain.boundary].sum() > 0):
                unresolved.append(n)
                break
            un, pn = _u_kr(domain, u, bn, kn, p), _psi_kR(domain, u, bn, kn)
            ub, pb = 2.0 ** (-sig * n) * u0, 2.0 ** (-tau * n) * psi0
            good = un <= ub * (1 + _EXACT_TOL) and pn <= pb * (1 + _EXACT_TOL)
            ok &= good
            rows.append({"n": n, "r_n": rn, "k_n": kn, "u_kn_rn": un, "u_bound": ub,
                         "psi_kn_rn": pn, "psi_bound": pb, "ok": bool(good)})
        return rows, ok

    factor = 1.0
    rows, ok = run(d_formula)
    while not ok and factor < 2.0 ** 60:
        factor *= 2.0
        rows, ok = run(max(d_formula, 1e-300) * factor)
    d_used = d_formula * factor if d_formula > 0 else (0.0 if ok else factor * 1e-300)
    # first index after which the ball no longer changes as a node set
    sets = [_ball(domain, xi, row["r_n"]) for row in rows]
    trunc = next((n for n in range(len(sets) - 1)
                  if all(np.array_equal(sets[n], s) for s in sets[n + 1:])), None)
    if unresolved:
        trunc = unresolved[0]
        notes.append(f"ball B(x, r_{unresolved[0]}) carries no interior measure; "
                     f"iteration truncated there")
    half = _ball(domain, xi, R / 2) & domain.interior & (domain.mu > 0)
    sup_half = float(u[half].max()) if half.any() else -math.inf
    final = sup_half <= k0 + d_used
    final_formula = sup_half <= k0 + d_formula
    return BoundednessReport(domain.ids[xi], float(R), float(k0), C, Cf, CfR, d1, d2, d_formula,
                             factor, d_used, rows, trunc, sup_half, bool(final),
                             bool(final_formula), bool(ok and final), notes)


# -- oscillation decay --------------------------------------------------------------------------


@dataclass
class OscillationReport:
    x: str
    status: str
    radii: list = field(default_factory=list)
    osc: list = field(default_factory=list)
    M: list = field(default_factory=list)
    m: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    contraction: list = field(default_factory=list)
    theta_fit: float = math.nan
    lambda_measured: float = math.nan
    lambda_params: float = math.nan
    theta0: float = math.nan
    lambda1: float = math.nan
    lambda2: float = math.nan
    holder_rate_holds: bool | None = None
    monotone: bool = True
    passed: bool | None = None


def f_sign_on_ball(domain, f, x, radius):
    """``+1``, ``-1`` or ``0`` when f keeps a sign on the closed boundary ball, else None."""
    fa = _f(domain, f)
    d = domain.graph.dist_from(_x(domain, x))
    vals = fa[domain.boundary & (d <= radius * (1 + 1e-12))]
    has_pos, has_neg = bool(np.any(vals > 0)), bool(np.any(vals < 0))
    if has_pos and has_neg:
        return None
    return 1 if has_pos else (-1 if has_neg else 0)


def default_osc_radii(domain):
    ell = domain.max_edge_length()
    return _radius_grid(domain, domain.diameter(domain.closed) / 4.0, ell)


def oscillation_decay(domain, solution, f, x, R_grid, params, osc_floor=1e-8):
    """Oscillation ``M(R) - m(R)`` of ``u`` over ``B(x, R) & Omega`` on a radius grid.

    Radii whose ball holds fewer than two interior nodes are skipped; with
    fewer than two usable radii no verdict is given (``passed`` is None).

    Refuses with status ``"inapplicable at x"`` when f changes sign on the
    closed boundary ball of the largest radius. Reports the fitted log-log
    slope, per-step contraction, the smallest ``nu >= params.nu`` whose
    density trigger fires at each radius and the contraction factor implied
    by ``params``.
    """
    u = _u(domain, solution)
    xi = _x(domain, x)
    R_grid = sorted((float(r) for r in R_grid), reverse=True)
    if not R_grid:
        return OscillationReport(domain.ids[xi], "no resolvable radius")
    sign = f_sign_on_ball(domain, f, xi, R_grid[0])
    if sign is None:
        return OscillationReport(domain.ids[xi], "inapplicable at x")
    if not params.eligible:
        return OscillationReport(domain.ids[xi], "ineligible exponents")
    # the argument is written for f <= 0; for f >= 0 it runs on -u
    v = -u if sign > 0 else u
    p, D = params.p, params.D
    rep = OscillationReport(domain.ids[xi], "applicable")
    trigger = (4.0 * D) ** -p
    for R in R_grid:
        ball = _ball(domain, xi, R) & domain.interior & (domain.mu > 0)
        if np.count_nonzero(ball) < 2:
            continue
        M, m = float(v[ball].max()), float(v[ball].min())
        rep.radii.append(R)
        rep.M.append(M)
        rep.m.append(m)
        rep.osc.append(M - m)
        nu_fire = None
        if M > m:
            mass = domain.mu[ball].sum()
            for nu in range(params.nu, 64):
                level = M - 2.0 ** (-nu - 1) * (M - m)
                if domain.mu[ball & (v > level)].sum() / mass <= trigger:
                    nu_fire = nu
                    break
        rep.nu.append(nu_fire)
    osc = np.array(rep.osc)
    if osc.size < 2:
        # a slope needs two scales; below that the graph cannot resolve decay
        rep.status = "no resolvable radius" if osc.size == 0 else "single resolvable radius"
        return rep
    rep.monotone = bool(np.all(np.diff(osc) <= _EXACT_TOL * max(1.0, osc.max())))
    rep.contraction = [float(b / a) if a > 0 else 0.0 for a, b in zip(osc, osc[1:])]
    rep.lambda_measured = max(rep.contraction, default=math.nan)
    pos = osc > 0
    if pos.sum() >= 2:
        rep.theta_fit = float(np.polyfit(np.log(np.array(rep.radii)[pos]), np.log(osc[pos]), 1)[0])
    if osc[0] <= osc_floor:
        rep.passed = rep.monotone
        rep.status = "constant near x"
        return rep
    # oscillation that vanishes at the smaller scales has decayed
    rep.passed = bool(rep.monotone and (pos.sum() < 2 or rep.theta_fit > 0))
    # contraction factor implied by the parameters, with M - m from the smallest scale
    R = rep.radii[0]
    spread = float(osc[pos][-1])
    nus = [n for n in rep.nu if n is not None]
    nu = max(nus) if nus else params.nu
    a, b = params.alpha, params.beta
    ah = (a + 1 / p - 1) / a
    bh = (b + 1 / p - 1) / b
    base = 1.0 - 2.0 ** -(nu + 1)
    rep.lambda1 = base + params.C * R ** ((1 - 1 / p) / a) * 2.0 ** (-(nu + 1) * ah) / spread ** (1 - ah)
    rep.lambda2 = base + params.C * R ** ((1 - 1 / p) / b) * 2.0 ** (-(nu + 1) * bh) / spread ** (1 - bh)
    lam = max(1.0 - 2.0 ** -(nu + 2), rep.lambda1, rep.lambda2)
    rep.lambda_params = lam
    if lam < 1:
        rep.theta0 = math.log2(1.0 / lam)
        rate = [2.0 ** (1 + rep.theta0) * (r / R) ** rep.theta0 * osc[0] for r in rep.radii]
        rep.holder_rate_holds = bool(np.all(osc <= np.array(rate) * (1 + _EXACT_TOL)))
    else:
        rep.theta0 = 0.0
    return rep


@dataclass
class OscillationScan:
    reports: list
    inapplicable: list
    exceptions: list

    @property
    def passed(self):
        return not self.exceptions


def oscillation_scan(domain, solution, f, params, R_grid=None, threads=1):
    """Oscillation decay at every boundary node; failures form the exception set."""
    R_grid = default_osc_radii(domain) if R_grid is None else R_grid
    reports = parallel_map(lambda z: oscillation_decay(domain, solution, f, z, R_grid, params),
                           list(domain.boundary_idx), threads)
    inapp = [r.x for r in reports if r.status == "inapplicable at x"]
    exc = [r.x for r in reports if r.passed is False]
    return OscillationScan(reports, inapp, exc)


# -- subminimizer ------------------------------------------------------------------------------


@dataclass
class SubminimizerReport:
    x: str
    r: float
    trials: int
    min_increase: float
    violations: list
    passed: bool


def local_dirichlet(domain, u, p, mask):
    """Edge energy over energy edges touching ``mask``."""
    g = domain.graph
    ea, eb, emask = domain.energy_edges()
    touch = mask[ea] | mask[eb]
    q = np.abs(u[ea[touch]] - u[eb[touch]]) / g.length[emask][touch]
    return float(np.sum(domain.omega()[emask][touch] * q ** p))


def subminimizer_check(domain, solution, x, r, f, p, trials=200, seed=0, tol=1e-10):
    """Non-positive perturbations supported in ``B(x, r)`` never lower the energy.

    Perturbations are ``-a * eta * w`` with the cutoff ``eta`` of
    ``B(x, r/2)`` in ``B(x, r)``, uniform random ``w`` and log-uniform
    amplitude ``a`` in ``[1e-2, 1e1]``; the first trial is ``phi = 0``.
    """
    u = _u(domain, solution)
    fa = _f(domain, f)
    xi = _x(domain, x)
    ball = _ball(domain, xi, r) & domain.closed
    neg = np.flatnonzero(ball & domain.boundary & (fa < 0))
    if neg.size:
        raise HypothesisRefused(f"subminimizer check refused: f < 0 at {domain.ids[neg[0]]!r} "
                                f"inside B({domain.ids[xi]}, {r:g})")
    eta = cutoff(domain, xi, r / 2.0, r) * ball
    base = local_dirichlet(domain, u, p, ball)
    rng = np.random.default_rng(seed)
    worst, bad = math.inf, []
    for t in range(trials):
        amp = 0.0 if t == 0 else 10.0 ** rng.uniform(-2.0, 1.0)
        phi = -amp * eta * rng.uniform(0.0, 1.0, size=domain.n)
        diff = local_dirichlet(domain, u + phi, p, ball) - base
        worst = min(worst, diff)
        if diff < -tol:
            bad.append({"trial": t, "amplitude": amp, "increase": diff})
    return SubminimizerReport(domain.ids[xi], float(r), trials, float(worst), bad, not bad)


# -- natural boundary -------------------------------------------------------------------------------


@dataclass
class NaturalBoundaryReport:
    constancy_balls: list
    violations: list
    tol: float
    tol_f: float

    @property
    def passed(self):
        return not self.violations


def natural_boundary_check(domain, solution, f, tol=1e-10, tol_f=None):
    """Where ``u`` is constant near a boundary node, f must vanish on the half ball.

    For each boundary node ``x`` the largest radius ``r`` with
    ``osc(u) <= tol`` on ``B(x, r)`` in the closed domain is found; balls with
    fewer than two interior nodes or ``r <= 2 * max edge`` are below
    resolution and skipped. Each remaining ball must have
    ``sum |f| P <= tol_f`` over the boundary nodes of ``B(x, r/2)``.
    """
    u = _u(domain, solution)
    fa = _f(domain, f)
    P = domain.perimeter
    if tol_f is None:
        tol_f = 1e-8 * float(np.sum(np.abs(fa) * P))
    ell2 = 2.0 * domain.max_edge_length()
    closed = np.flatnonzero(domain.closed)
    balls, bad = [], []
    for xi in domain.boundary_idx:
        d = domain.graph.dist_from(xi)
        order = closed[np.argsort(d[closed], kind="stable")]
        vals = u[order]
        hi = np.maximum.accumulate(vals)
        lo = np.minimum.accumulate(vals)
        breaks = np.flatnonzero(hi - lo > tol)
        r = float(d[order[breaks[0]]]) if breaks.size else float(d[order[-1]]) + ell2 + 1.0
        inside = domain.ball_mask(xi, r)
        if np.count_nonzero(inside & domain.interior) < 2 or not r > ell2:
            continue
        half = domain.ball_mask(xi, r / 2.0) & domain.boundary
        mass = float(np.sum(np.abs(fa[half]) * P[half]))
        entry = {"x": domain.ids[xi], "r": r, "f_mass_half_ball": mass}
        balls.append(entry)
        if mass > tol_f:
            bad.append(entry)
    return NaturalBoundaryReport(balls, bad, tol, tol_f)


def with_constant(params, C):
    """Copy of ``params`` carrying the measured constant ``C`` (and matching ``D``)."""
    C = max(1.0, float(C))
    return replace(params, C=C, D=max(2.0, C ** (1.0 / params.alpha), C ** (1.0 / params.beta)))

"""Discrete metric measure spaces: weighted graphs with a domain partition.

A :class:`Domain` carries the graph ``(X, d, mu)`` together with the split of
its nodes into the open set (interior), its boundary and, optionally, ambient
exterior nodes. Distances are shortest-path distances over edge lengths and
balls are open.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from ._minimize import minimize_edge_energy

log = logging.getLogger(__name__)

# relative guard keeping nodes at distance exactly r out of the open ball B(x, r)
_BALL_RTOL = 1e-12


class DomainError(ValueError):
    """A domain violates one of its structural invariants."""


class DomainFormatError(DomainError):
    """A domain file could not be parsed or validated."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass
class MetricGraph:
    """Weighted graph with node measure ``mu`` and edge lengths ``length``."""

    ids: list
    mu: np.ndarray
    ea: np.ndarray
    eb: np.ndarray
    length: np.ndarray
    coords: np.ndarray | None = None
    _dist_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.ea = np.ascontiguousarray(self.ea, dtype=np.int64)
        self.eb = np.ascontiguousarray(self.eb, dtype=np.int64)
        self.length = np.asarray(self.length, dtype=np.float64)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise DomainError("duplicate node ids")
        if np.any(~np.isfinite(self.mu)) or np.any(self.mu < 0):
            raise DomainError("node measures must be finite and non-negative")
        if np.any(~(self.length > 0)) or np.any(~np.isfinite(self.length)):
            raise DomainError("edge lengths must be finite and strictly positive")
        if np.any(self.ea == self.eb):
            raise DomainError("self-loops are not allowed")

    @property
    def n(self):
        return len(self.ids)

    @property
    def m(self):
        return len(self.ea)

    def adjacency(self):
        """Symmetric sparse matrix of edge lengths (shortest parallel edge wins)."""
        A = sp.coo_matrix(
            (np.concatenate([self.length, self.length]),
             (np.concatenate([self.ea, self.eb]), np.concatenate([self.eb, self.ea]))),
            shape=(self.n, self.n))
        A = A.tocsr()
        A.sum_duplicates()
        # sum_duplicates adds parallel lengths; rebuild with the minimum instead
        if A.nnz < 2 * self.m:
            best = {}
            for a, b, w in zip(self.ea, self.eb, self.length):
                key = (min(a, b), max(a, b))
                best[key] = min(best.get(key, math.inf), w)
            r = [k[0] for k in best] + [k[1] for k in best]
            c = [k[1] for k in best] + [k[0] for k in best]
            v = list(best.values()) * 2
            A = sp.csr_matrix((v, (r, c)), shape=(self.n, self.n))
        return A

    def dist_from(self, i):
        """Shortest-path distances from node index ``i`` to all nodes."""
        d = self._dist_cache.get(i)
        if d is None:
            if "_adj" not in self._dist_cache:
                self._dist_cache["_adj"] = self.adjacency()
            d = csgraph.dijkstra(self._dist_cache["_adj"], directed=False, indices=i)
            self._dist_cache[i] = d
        return d

    def distances(self):
        """Full distance matrix (computed once)."""
        D = self._dist_cache.get("_all")
        if D is None:
            if "_adj" not in self._dist_cache:
                self._dist_cache["_adj"] = self.adjacency()
            D = csgraph.dijkstra(self._dist_cache["_adj"], directed=False)
            self._dist_cache["_all"] = D
        return D


@dataclass
class Domain:
    """Interior/boundary partition of a :class:`MetricGraph`.

    ``perimeter`` is indexed like the graph nodes and is zero off the boundary.
    ``exterior`` marks ambient nodes outside the closed domain; they may carry
    measure but take no part in energies.
    """

    graph: MetricGraph
    interior: np.ndarray
    boundary: np.ndarray
    perimeter: np.ndarray
    exterior: np.ndarray | None = None

    def __post_init__(self):
        n = self.graph.n
        self.interior = np.asarray(self.interior, dtype=bool)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        self.exterior = (np.zeros(n, dtype=bool) if self.exterior is None
                         else np.asarray(self.exterior, dtype=bool))
        self.perimeter = np.asarray(self.perimeter, dtype=np.float64)
        self.validate()

    # -- structure -----------------------------------------------------------

    def validate(self):
        g = self.graph
        n = g.n
        for name, arr in (("interior", self.interior), ("boundary", self.boundary),
                          ("exterior", self.exterior), ("perimeter", self.perimeter)):
            if arr.shape != (n,):
                raise DomainError(f"{name} array has shape {arr.shape}, expected ({n},)")
        if np.any(self.interior & self.boundary):
            raise DomainError("interior and boundary overlap")
        if np.any(self.exterior & (self.interior | self.boundary)):
            raise DomainError("exterior nodes overlap the closed domain")
        unlabeled = ~(self.interior | self.boundary | self.exterior)
        if np.any(unlabeled):
            raise DomainError(f"node {g.ids[np.flatnonzero(unlabeled)[0]]!r} is neither "
                              "interior nor boundary")
        if not np.any(self.interior):
            raise DomainError("domain has no interior nodes")
        if g.mu[self.interior].sum() <= 0:
            raise DomainError("total interior measure must be positive")
        bad = np.flatnonzero(self.boundary & (g.mu != 0))
        if bad.size:
            raise DomainError(f"boundary node {g.ids[bad[0]]!r} has non-zero measure")
        bad = np.flatnonzero(self.boundary & ~(self.perimeter > 0))
        if bad.size:
            raise DomainError(f"boundary node {g.ids[bad[0]]!r} needs perimeter > 0")
        if np.any(self.perimeter[~self.boundary] != 0):
            raise DomainError("perimeter weights are only allowed on boundary nodes")
        touches = np.zeros(n, dtype=bool)
        ii = self.interior
        touches[g.ea[ii[g.eb]]] = True
        touches[g.eb[ii[g.ea]]] = True
        bad = np.flatnonzero(self.boundary & ~touches)
        if bad.size:
            raise DomainError(f"boundary node {g.ids[bad[0]]!r} has no edge to the interior")
        # the energy only sees edges meeting the interior with positive weight
        ea, eb, _ = self.energy_edges()
        closed = np.flatnonzero(self.interior | self.boundary)
        A = sp.coo_matrix((np.ones(len(ea)), (ea, eb)), shape=(n, n)).tocsr()
        A = A[closed][:, closed]
        ncomp, _ = csgraph.connected_components(A, directed=False)
        if ncomp != 1:
            raise DomainError(f"closed domain splits into {ncomp} components under the "
                              "energy edges")

    @property
    def n(self):
        return self.graph.n

    @property
    def ids(self):
        return self.graph.ids

    @property
    def mu(self):
        return self.graph.mu

    @property
    def interior_idx(self):
        return np.flatnonzero(self.interior)

    @property
    def boundary_idx(self):
        return np.flatnonzero(self.boundary)

    @property
    def closed(self):
        return self.interior | self.boundary

    def idx(self, node_id):
        try:
            return self.graph.index[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def omega(self):
        """Edge weights (mu(x) + mu(y)) / 2 for every graph edge."""
        g = self.graph
        return 0.5 * (g.mu[g.ea] + g.mu[g.eb])

    def energy_edges(self):
        """Edges with an interior endpoint and positive weight: (ea, eb, mask)."""
        g = self.graph
        ext = self.exterior
        mask = ((self.interior[g.ea] | self.interior[g.eb]) & ~ext[g.ea] & ~ext[g.eb]
                & (self.omega() > 0))
        return g.ea[mask], g.eb[mask], mask

    def closure_edges(self):
        """Mask of edges with both endpoints in the closed domain."""
        g = self.graph
        c = self.closed
        return c[g.ea] & c[g.eb]

    def interior_measure(self):
        return float(self.mu[self.interior].sum())

    def diameter(self, mask=None):
        """Largest finite distance between nodes selected by ``mask``."""
        sel = np.flatnonzero(self.interior if mask is None else mask)
        best = 0.0
        for i in sel:
            d = self.graph.dist_from(i)[sel]
            best = max(best, float(np.max(d[np.isfinite(d)], initial=0.0)))
        return best

    def min_edge_length(self):
        return float(self.graph.length.min()) if self.graph.m else 0.0

    def max_edge_length(self):
        return float(self.graph.length.max()) if self.graph.m else 0.0

    # -- balls ---------------------------------------------------------------

    def ball_mask(self, center_idx, radius):
        d = self.graph.dist_from(center_idx)
        return d < radius - _BALL_RTOL * max(radius, 1.0)

    def ball_idx(self, center_idx, radius):
        return np.flatnonzero(self.ball_mask(center_idx, radius))

    def to_ids(self, idx):
        return {self.ids[i] for i in np.asarray(idx).ravel()}

    def to_mask(self, node_ids):
        mask = np.zeros(self.n, dtype=bool)
        for nid in node_ids:
            mask[self.idx(nid)] = True
        return mask


def ball(domain, center, radius):
    """Open ball ``{y : d(center, y) < radius}`` as a set of node ids."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    return domain.to_ids(domain.ball_idx(domain.idx(center), radius))


# -- file format --------------------------------------------------------------


def _array_offsets(text, key):
    """Character offsets of the elements of the top-level array ``key``."""
    dec = json.JSONDecoder()
    start = text.find(f'"{key}"')
    if start < 0:
        return []
    i = text.index("[", start) + 1
    out = []
    while True:
        while i < len(text) and text[i] in " \t\r\n,":
            i += 1
        if i >= len(text) or text[i] == "]":
            return out
        out.append(i)
        _, i = dec.raw_decode(text, i)


def _line_of(text, offset):
    return text.count("\n", 0, offset) + 1


def domain_from_json(text):
    """Parse and validate a domain file; errors carry the offending line."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainFormatError(exc.msg, exc.lineno) from None
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise DomainFormatError("top level must be an object with 'nodes' and 'edges'", 1)
    node_lines = [_line_of(text, o) for o in _array_offsets(text, "nodes")]
    edge_lines = [_line_of(text, o) for o in _array_offsets(text, "edges")]

    ids, mu, coords, interior, boundary, exterior, perim = [], [], [], [], [], [], []
    seen = {}
    for k, rec in enumerate(data["nodes"]):
        line = node_lines[k] if k < len(node_lines) else None
        if not isinstance(rec, dict) or "id" not in rec or "mu" not in rec:
            raise DomainFormatError("node record needs 'id' and 'mu'", line)
        nid = str(rec["id"])
        if nid in seen:
            raise DomainFormatError(f"duplicate node id {nid!r}", line)
        seen[nid] = line
        m = rec["mu"]
        if not isinstance(m, (int, float)) or not math.isfinite(m) or m < 0:
            raise DomainFormatError(f"node {nid!r}: mu must be a finite number >= 0", line)
        is_b = bool(rec.get("boundary", False))
        is_x = bool(rec.get("exterior", False))
        if is_b and is_x:
            raise DomainFormatError(f"node {nid!r} cannot be boundary and exterior", line)
        if is_b:
            if "perimeter" not in rec:
                raise DomainFormatError(f"boundary node {nid!r} needs 'perimeter'", line)
            P = rec["perimeter"]
            if not isinstance(P, (int, float)) or not P > 0 or not math.isfinite(P):
                raise DomainFormatError(f"boundary node {nid!r}: perimeter must be > 0", line)
            if m != 0:
                raise DomainFormatError(f"boundary node {nid!r} must have mu = 0", line)
        elif "perimeter" in rec:
            raise DomainFormatError(f"node {nid!r}: perimeter given on a non-boundary node",
                                    line)
        ids.append(nid)
        mu.append(float(m))
        coords.append(rec.get("coords"))
        boundary.append(is_b)
        exterior.append(is_x)
        interior.append(not is_b and not is_x)
        perim.append(float(rec["perimeter"]) if is_b else 0.0)

    ea, eb, length = [], [], []
    for k, rec in enumerate(data["edges"]):
        line = edge_lines[k] if k < len(edge_lines) else None
        if not isinstance(rec, dict) or not {"a", "b", "len"} <= rec.keys():
            raise DomainFormatError("edge record needs 'a', 'b' and 'len'", line)
        a, b = str(rec["a"]), str(rec["b"])
        for end in (a, b):
            if end not in seen:
                raise DomainFormatError(f"edge references unknown node {end!r}", line)
        if a == b:
            raise DomainFormatError(f"self-loop at {a!r}", line)
        L = rec["len"]
        if not isinstance(L, (int, float)) or not L > 0 or not math.isfinite(L):
            raise DomainFormatError(f"edge {a!r}-{b!r}: len must be > 0", line)
        index = {nid: i for i, nid in enumerate(ids)} if k == 0 else index
        ea.append(index[a])
        eb.append(index[b])
        length.append(float(L))

    xy = None
    if coords and all(c is not None for c in coords):
        try:
            xy = np.array(coords, dtype=np.float64)
        except ValueError:
            raise DomainFormatError("coords must all have the same length", 1) from None
    try:
        graph = MetricGraph(ids, np.array(mu), np.array(ea, dtype=np.int64),
                            np.array(eb, dtype=np.int64), np.array(length), xy)
        return Domain(graph, np.array(interior), np.array(boundary), np.array(perim),
                      np.array(exterior))
    except DomainError as exc:
        msg = str(exc)
        line = next((seen[nid] for nid in ids if repr(nid) in msg), None)
        raise DomainFormatError(msg, line) from None


def load_domain(path):
    with open(path, encoding="utf-8") as fh:
        return domain_from_json(fh.read())


def domain_to_dict(domain):
    g = domain.graph
    nodes = []
    for i, nid in enumerate(g.ids):
        rec = {"id": nid, "mu": float(g.mu[i])}
        if g.coords is not None:
            rec["coords"] = [float(c) for c in g.coords[i]]
        rec["boundary"] = bool(domain.boundary[i])
        if domain.boundary[i]:
            rec["perimeter"] = float(domain.perimeter[i])
        if domain.exterior[i]:
            rec["exterior"] = True
        nodes.append(rec)
    edges = [{"a": g.ids[a], "b": g.ids[b], "len": float(w)}
             for a, b, w in zip(g.ea, g.eb, g.length)]
    return {"nodes": nodes, "edges": edges}


# -- diagnostics ----------------------------------------------------------------


@dataclass
class SpaceDiagnostics:
    doubling_constant: float
    mass_exponent: float
    mass_constant: float
    poincare_constant: float
    density_constant: float
    perimeter_reg_constant: float
    ahlfors_scale: float


@dataclass
class MassExponentFit:
    s: float
    C: float
    pairs: int

    def __iter__(self):
        return iter((self.s, self.C))


def default_radii(domain):
    """Radii h * (2^k + 1/2), k = 0, 1, ..., up to half the diameter."""
    h = domain.min_edge_length()
    top = max(domain.diameter(domain.closed) / 2.0, 1.5 * h)
    radii = []
    k = 0
    while h * (2 ** k + 0.5) <= top:
        radii.append(h * (2 ** k + 0.5))
        k += 1
    return radii or [1.5 * h]


def ball_masses(domain, centers, radii):
    """``out[j, c] = mu(B(centers[c], radii[j]))``."""
    mu = domain.mu
    out = np.empty((len(radii), len(centers)))
    for c, i in enumerate(centers):
        d = domain.graph.dist_from(i)
        for j, r in enumerate(radii):
            out[j, c] = mu[d < r - _BALL_RTOL * max(r, 1.0)].sum()
    return out


def estimate_mass_exponent(domain, sample_centers, radii, seed=0, centers=None):
    """Fit ``mu(B(x,r)) / mu(B(y,R)) >= C (r/R)^s`` over sampled pairs.

    Centres ``y`` are drawn from the interior (or given explicitly as ids);
    ``x`` ranges over ``B(y, R)`` and ``r <= R`` over ``radii``. The slope comes
    from a log-log least-squares fit, then ``C`` is lowered until every pair
    satisfies the bound. ``s`` is kept above 1.
    """
    if domain.n < 2:
        raise ValueError("mass exponent is undefined on a single-node space")
    radii = sorted(float(r) for r in radii)
    if not radii:
        raise ValueError("radii must be non-empty")
    if centers is None:
        if sample_centers < 1:
            raise ValueError("need at least one sample centre")
        pool = domain.interior_idx
        rng = np.random.default_rng(seed)
        k = min(sample_centers, pool.size)
        ys = np.sort(rng.choice(pool, size=k, replace=False))
    else:
        ys = np.array([domain.idx(c) for c in centers])

    xs_all = np.arange(domain.n)
    mass_x = ball_masses(domain, xs_all, radii)
    logs_ratio, logs_scale = [], []
    for y in ys:
        dy = domain.graph.dist_from(y)
        for J, R in enumerate(radii):
            mR = mass_x[J, y]
            if mR <= 0:
                continue
            inside = np.flatnonzero(dy < R - _BALL_RTOL * max(R, 1.0))
            for j in range(J + 1):
                mr = mass_x[j, inside]
                ok = mr > 0
                logs_ratio.append(np.log(mr[ok] / mR))
                logs_scale.append(np.full(ok.sum(), math.log(radii[j] / R)))
    if not logs_ratio:
        raise ValueError("no sampled pair has positive ball measure")
    lr = np.concatenate(logs_ratio)
    ls = np.concatenate(logs_scale)
    if np.ptp(ls) == 0:
        s = 1.0 + 1e-6
    else:
        s = float(np.polyfit(ls, lr, 1)[0])
    s = max(s, 1.0 + 1e-6)
    C = float(np.exp(np.min(lr - s * ls)))
    return MassExponentFit(s, C, int(lr.size))


def doubling_constant(domain, radii, centers=None):
    """Largest observed ``mu(B(z,2r)) / mu(B(z,r))`` over centres and radii."""
    zs = domain.interior_idx if centers is None else centers
    radii = [float(r) for r in radii]
    small = ball_masses(domain, zs, radii)
    big = ball_masses(domain, zs, [2 * r for r in radii])
    ok = small > 0
    return float(np.max(big[ok] / small[ok], initial=1.0))


@dataclass
class DensityCheck:
    worst_ratio: float
    witness: tuple | None


def check_density(domain, radii=None):
    """Smallest ``mu(B(z,r) & Omega) / mu(B(z,r))`` over z in Omega, dyadic r."""
    if radii is None:
        top = domain.diameter()
        h = domain.min_edge_length()
        radii = []
        r = top
        while r >= h and r > 0:
            radii.append(r)
            r /= 2
        radii = radii or [max(h, 1.0)]
    mu_in = np.where(domain.interior, domain.mu, 0.0)
    worst, witness = 1.0, None
    for z in domain.interior_idx:
        d = domain.graph.dist_from(z)
        for r in radii:
            b = d < r - _BALL_RTOL * max(r, 1.0)
            total = domain.mu[b].sum()
            if total <= 0:
                continue
            ratio = mu_in[b].sum() / total
            if ratio < worst:
                worst, witness = float(ratio), (domain.ids[z], float(r))
    if witness is None:
        witness = (domain.ids[domain.interior_idx[0]], float(radii[0]))
    return DensityCheck(worst, witness)


@dataclass
class PerimeterRegularity:
    c_low: float
    c_high: float
    irregular: bool
    witness_low: tuple | None = None
    witness_high: tuple | None = None

    def __iter__(self):
        return iter((self.c_low, self.c_high))


def check_perimeter_regularity(domain, scale_grid, threshold=1e3):
    """Smallest constants with ``mu(B)/(C_low r) <= P(B) <= C_high mu(B)/r``.

    Samples every boundary centre and radius in ``scale_grid``; radii whose
    ball carries no measure are below resolution and skipped.
    """
    scale_grid = [float(r) for r in scale_grid]
    if not scale_grid:
        raise ValueError("radius grid is empty")
    if not np.any(domain.boundary):
        raise ValueError("domain has no boundary")
    c_low = c_high = 0.0
    w_low = w_high = None
    for x in domain.boundary_idx:
        d = domain.graph.dist_from(x)
        for r in scale_grid:
            b = d < r - _BALL_RTOL * max(r, 1.0)
            m = domain.mu[b].sum()
            P = domain.perimeter[b].sum()
            if m <= 0:
                continue
            hi = P * r / m
            lo = m / (r * P)
            if hi > c_high:
                c_high, w_high = hi, (domain.ids[x], r)
            if lo > c_low:
                c_low, w_low = lo, (domain.ids[x], r)
    if w_high is None:
        raise ValueError("every sampled ball is below the graph resolution")
    irregular = max(c_low, c_high) > threshold
    return PerimeterRegularity(float(c_low), float(c_high), bool(irregular), w_low, w_high)


def _set_diameter(domain, idx):
    best = 0.0
    for i in idx:
        best = max(best, float(np.max(domain.graph.dist_from(i)[idx])))
    return best


def estimate_poincare_constant(domain, ball, p, trials=20, seed=0):
    """Sampled lower bound for the p-Poincare constant on ``ball`` (dilation 1).

    Ratio ``avg_B |u - u_B| / (rad(B) * avg_B(g_u^p)^(1/p))`` maximised over
    random fields, coordinate functions and distance functions; ``g_u`` is the
    node max-quotient upper gradient and ``rad(B)`` the diameter of the node
    set. Constant trials (``g_u == 0`` on the ball) are skipped.
    """
    from .calculus import node_upper_gradient

    if not p > 1:
        raise ValueError("p must be > 1")
    idx = np.array(sorted(domain.idx(nid) for nid in ball))
    inside = idx[domain.interior[idx]]
    if inside.size < 2:
        raise ValueError("ball must meet the interior in at least two nodes")
    w = domain.mu[inside]
    if w.sum() <= 0:
        raise ValueError("ball carries no interior measure")
    rad = _set_diameter(domain, idx)
    rng = np.random.default_rng(seed)
    fields = [rng.standard_normal(domain.n) for _ in range(trials)]
    if domain.graph.coords is not None:
        fields += [domain.graph.coords[:, k].copy() for k in range(domain.graph.coords.shape[1])]
    for i in idx[: min(idx.size, 8)]:
        d = domain.graph.dist_from(i).copy()
        d[~np.isfinite(d)] = 0.0
        fields.append(d)
    best = 0.0
    for u in fields:
        g = node_upper_gradient(domain, u)[inside]
        grad = (np.sum(w * g ** p) / w.sum()) ** (1.0 / p)
        if grad <= 0:
            continue
        ub = np.sum(w * u[inside]) / w.sum()
        osc = np.sum(w * np.abs(u[inside] - ub)) / w.sum()
        best = max(best, float(osc / (rad * grad)))
    return best


# -- capacity ----------------------------------------------------------------------


def _capacity_idx(domain, E, B2, p):
    n = domain.n
    if not E.any():
        return 0.0
    if np.any(E & ~B2):
        return math.inf
    g = domain.graph
    coef = domain.omega() / g.length ** p
    u0 = np.zeros(n)
    u0[E] = 1.0
    free = B2 & ~E
    # free components with no weighted edge to a fixed node are energy-neutral
    pos = coef > 0
    A = sp.coo_matrix((np.ones(int(pos.sum())), (g.ea[pos], g.eb[pos])), shape=(n, n)).tocsr()
    ncomp, lab = csgraph.connected_components(A, directed=False)
    anchored = np.zeros(ncomp, dtype=bool)
    anchored[lab[~free]] = True
    free &= anchored[lab]
    if not free.any():
        return float(np.sum(coef * np.abs(u0[g.ea] - u0[g.eb]) ** p))
    res = minimize_edge_energy(n, g.ea, g.eb, coef, p, np.zeros(n), free=free, u0=u0,
                               tol_grad=1e-13)
    return float(res.edge_energy)


def relative_capacity(domain, E, B2, p):
    """Relative p-capacity of ``E`` in ``B2`` (node-id sets).

    Minimises ``sum_e omega_e |du / len_e|^p`` over the whole graph with
    ``u = 1`` on ``E`` and ``u = 0`` off ``B2``; returns ``inf`` when ``E`` is
    not contained in ``B2``.
    """
    if not p > 1:
        raise ValueError("p must be > 1")
    return _capacity_idx(domain, domain.to_mask(E), domain.to_mask(B2), p)


def capacity_bound_constants(domain, E, x, r, p):
    """Constants making ``mu(E)/(C r^p) <= cap(E, B(x,2r)) <= C mu(B)/r^p`` hold."""
    cap = relative_capacity(domain, E, ball(domain, x, 2 * r), p)
    muE = float(domain.mu[domain.to_mask(E)].sum())
    muB = float(domain.mu[domain.ball_mask(domain.idx(x), r)].sum())
    lower = muE / (r ** p * cap) if cap > 0 else (math.inf if muE > 0 else 0.0)
    upper = cap * r ** p / muB if muB > 0 else math.inf
    return cap, max(lower, upper, 1.0)


def fine_thinness_terms(domain, x, U, p, dyadic_levels=12, scale=None):
    """Per-level capacity ratios behind :func:`fine_thinness_sum`.

    Level ``j`` uses ``rho = scale * 2**-j``; ``scale`` defaults to the
    largest distance from ``x`` so that the levels resolve on the graph.
    Returns a list of ``(rho, term)``; skipped levels carry ``term=None``.
    """
    if not p > 1:
        raise ValueError("p must be > 1")
    if dyadic_levels < 1:
        raise ValueError("dyadic_levels must be >= 1")
    xi = domain.idx(x)
    U_mask = domain.to_mask(U)
    if not U_mask[xi]:
        raise ValueError("x must belong to U")
    if scale is None:
        d = domain.graph.dist_from(xi)
        scale = float(np.max(d[np.isfinite(d)]))
    out = []
    for j in range(1, dyadic_levels + 1):
        rho = scale * 2.0 ** -j
        B = domain.ball_mask(xi, rho)
        B2 = domain.ball_mask(xi, 2 * rho)
        if B.sum() <= 1:
            log.info("thinness level %d (rho=%.3g) below graph resolution, skipped", j, rho)
            out.append((rho, None))
            continue
        den = _capacity_idx(domain, B, B2, p)
        if den <= 0:
            log.info("thinness level %d has zero capacity denominator, skipped", j)
            out.append((rho, None))
            continue
        num = _capacity_idx(domain, B & ~U_mask, B2, p)
        out.append((rho, (num / den) ** (1.0 / (p - 1.0))))
    return out


def fine_thinness_sum(domain, x, U, p, dyadic_levels=12, scale=None):
    """Dyadic discretisation of the p-fine thinness integral of ``X \\ U`` at ``x``."""
    terms = fine_thinness_terms(domain, x, U, p, dyadic_levels, scale)
    return float(sum(t for _, t in terms if t is not None))


def ahlfors_scale(domain, s, radii, threshold=10.0):
    """Largest radius r0 in ``radii`` with ``mu(B(x,r)) ~ r^s`` below it.

    Checks the two-sided bound with constant ``threshold`` over all closed-domain
    centres for every sampled radius up to r0, skipping balls without measure.
    Returns 0 when even the smallest radius fails.
    """
    radii = sorted(float(r) for r in radii)
    centers = np.flatnonzero(domain.closed)
    masses = ball_masses(domain, centers, radii)
    lo, hi = math.inf, 0.0
    r0 = 0.0
    for j, r in enumerate(radii):
        m = masses[j]
        m = m[m > 0] / r ** s
        if m.size == 0:
            continue
        lo, hi = min(lo, float(m.min())), max(hi, float(m.max()))
        # one constant C must give r^s / C <= mu(B) <= C r^s
        if max(hi, 1.0 / lo) > threshold:
            break
        r0 = r
    return r0


def diagnose(domain, p, seed=0, radii=None, sample_centers=16, trials=20):
    """Collect the standing-assumption constants for ``domain``."""
    radii = default_radii(domain) if radii is None else radii
    fit = estimate_mass_exponent(domain, sample_centers, radii, seed=seed)
    cd = doubling_constant(domain, radii)
    dens = check_density(domain)
    perim = check_perimeter_regularity(domain, radii) if np.any(domain.boundary) else None
    rng = np.random.default_rng(seed)
    poincare = 0.0
    for r in radii:
        for z in rng.choice(domain.interior_idx, size=min(4, domain.interior_idx.size),
                            replace=False):
            b = domain.ball_idx(z, r)
            if np.count_nonzero(domain.interior[b]) >= 2:
                poincare = max(poincare, estimate_poincare_constant(
                    domain, domain.to_ids(b), p, trials=trials,
                    seed=int(rng.integers(2 ** 31))))
    r0 = ahlfors_scale(domain, fit.s, radii)
    diag = SpaceDiagnostics(
        doubling_constant=cd,
        mass_exponent=fit.s,
        mass_constant=fit.C,
        poincare_constant=poincare,
        density_constant=1.0 / dens.worst_ratio if dens.worst_ratio > 0 else math.inf,
        perimeter_reg_constant=max(perim.c_low, perim.c_high, 1.0) if perim else math.inf,
        ahlfors_scale=r0,
    )
    return diag, {"mass_fit_pairs": fit.pairs, "density_witness": dens.witness,
                  "perimeter": perim}

"""Test-domain generators and boundary data.

Lattice domains use a vertex boundary: the lattice nodes outside the interior
that share an edge with it. Lattice corners touch no interior node and are
left out, so every boundary node carries a positive perimeter weight.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .space import Domain, MetricGraph, load_domain

log = logging.getLogger(__name__)

KINDS = ("path", "grid", "lshape", "annulus_grid", "sierpinski", "file")
_ALIASES = {"annulus": "annulus_grid", "gasket": "sierpinski"}


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    n: int = 3
    level: int = 1
    h: float = 1.0
    measure: str = "cell_volume"
    perimeter: str = "face_area"
    path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        if self.measure not in ("unit", "cell_volume"):
            raise ValueError(f"unknown measure convention {self.measure!r}")
        if self.perimeter not in ("unit", "face_area"):
            raise ValueError(f"unknown perimeter convention {self.perimeter!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file domains need a path")
        if self.n < 1 or self.level < 0:
            raise ValueError("size parameters must be positive")

    @classmethod
    def parse(cls, text, **kw):
        """Parse ``kind:size`` shorthands such as ``grid:16`` or ``sierpinski:3``.

        Anything that is not a known kind is treated as a domain file path.
        """
        kind, _, arg = text.partition(":")
        kind = _ALIASES.get(kind, kind)
        if kind not in KINDS or kind == "file":
            return cls("file", path=arg if kind == "file" else text, **kw)
        if kind == "sierpinski":
            return cls(kind, level=int(arg) if arg else 2, **kw)
        default = {"path": 3, "grid": 8, "lshape": 16, "annulus_grid": 16}[kind]
        return cls(kind, n=int(arg) if arg else default, **kw)


def spreadsheet_id(i):
    """0 -> 'a', 25 -> 'z', 26 -> 'aa', ..."""
    s = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        s = chr(ord("a") + r) + s
    return s


def generate(spec):
    """Build the :class:`Domain` described by ``spec``."""
    if spec.kind == "file":
        return load_domain(spec.path)
    if spec.kind == "path":
        return _path(spec)
    if spec.kind == "sierpinski":
        return _sierpinski(spec)
    n = spec.n
    if n < 3:
        raise ValueError(f"{spec.kind} needs n >= 3 to have interior nodes")
    inner = np.zeros((n, n), dtype=bool)
    inner[1:-1, 1:-1] = True
    if spec.kind == "lshape":
        if n < 5:
            raise ValueError("lshape needs n >= 5")
        m = n // 2
        inner[m:, m:] = False
    elif spec.kind == "annulus_grid":
        if n < 7:
            raise ValueError("annulus_grid needs n >= 7")
        q = max(1, n // 6)
        c = (n - 1) / 2.0
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        inner &= ~((np.abs(ii - c) < q + 0.5) & (np.abs(jj - c) < q + 0.5))
    return lattice_domain(inner, spec.h, spec.measure, spec.perimeter)


def lattice_domain(inner, h=1.0, measure="cell_volume", perimeter="face_area"):
    """Domain on the square lattice whose interior is the boolean mask ``inner``."""
    inner = np.asarray(inner, dtype=bool)
    nx, ny = inner.shape
    dim = 2
    count = np.zeros((nx, ny), dtype=int)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted = np.zeros_like(inner)
        src = inner[max(0, -di):nx - max(0, di), max(0, -dj):ny - max(0, dj)]
        shifted[max(0, di):nx - max(0, -di), max(0, dj):ny - max(0, -dj)] = src
        count += shifted
    bnd = (count > 0) & ~inner
    keep = inner | bnd
    ids, index = [], {}
    for i in range(nx):
        for j in range(ny):
            if keep[i, j]:
                index[i, j] = len(ids)
                ids.append(f"{i},{j}")
    mu_in = h ** dim if measure == "cell_volume" else 1.0
    mu = np.array([mu_in if inner[int(a), int(b)] else 0.0
                   for a, b in (s.split(",") for s in ids)])
    coords = np.array([[int(a) * h, int(b) * h] for a, b in (s.split(",") for s in ids)])
    ea, eb = [], []
    for (i, j), k in index.items():
        for di, dj in ((1, 0), (0, 1)):
            other = index.get((i + di, j + dj))
            if other is not None:
                ea.append(k)
                eb.append(other)
    graph = MetricGraph(ids, mu, np.array(ea), np.array(eb), np.full(len(ea), float(h)),
                        coords)
    interior = np.array([inner[tuple(map(int, s.split(",")))] for s in ids])
    boundary = ~interior
    face = h ** (dim - 1) if perimeter == "face_area" else 1.0
    P = np.array([count[tuple(map(int, s.split(",")))] * face if b and perimeter == "face_area"
                  else (1.0 if b else 0.0) for s, b in zip(ids, boundary)])
    return Domain(graph, interior, boundary, P)


def _path(spec):
    n = spec.n
    if n < 3:
        raise ValueError("path needs n >= 3 to have interior nodes")
    h = spec.h
    ids = [spreadsheet_id(i) for i in range(n)]
    mu = np.full(n, h if spec.measure == "cell_volume" else 1.0)
    mu[[0, -1]] = 0.0
    interior = np.ones(n, dtype=bool)
    interior[[0, -1]] = False
    P = np.where(interior, 0.0, 1.0)
    graph = MetricGraph(ids, mu, np.arange(n - 1), np.arange(1, n), np.full(n - 1, h),
                        (np.arange(n) * h)[:, None])
    return Domain(graph, interior, ~interior, P)


def sierpinski_triangles(level):
    """Smallest triangles of the level-``level`` gasket in integer coordinates."""
    N = 2 ** level
    tris = [((0, 0), (N, 0), (0, N))]
    for _ in range(level):
        nxt = []
        for a, b, c in tris:
            ab = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
            ac = ((a[0] + c[0]) // 2, (a[1] + c[1]) // 2)
            bc = ((b[0] + c[0]) // 2, (b[1] + c[1]) // 2)
            nxt += [(a, ab, ac), (ab, b, bc), (ac, bc, c)]
        tris = nxt
    return tris


def _sierpinski(spec):
    L = spec.level
    if L < 1:
        raise ValueError("sierpinski needs level >= 1 to have interior nodes")
    N = 2 ** L
    edges = set()
    for tri in sierpinski_triangles(L):
        for u, v in ((0, 1), (1, 2), (0, 2)):
            edges.add(tuple(sorted((tri[u], tri[v]))))
    pts = sorted({q for e in edges for q in e})
    index = {q: k for k, q in enumerate(pts)}
    ids = [f"{a},{b}" for a, b in pts]
    corners = {(0, 0), (N, 0), (0, N)}
    interior = np.array([q not in corners for q in pts])
    # edge length h; the cell-volume measure is the natural gasket mass h^(log2 3)
    dim = math.log(3) / math.log(2)
    mu_in = spec.h ** dim if spec.measure == "cell_volume" else 1.0
    mu = np.where(interior, mu_in, 0.0)
    ea = np.array([index[a] for a, _ in sorted(edges)])
    eb = np.array([index[b] for _, b in sorted(edges)])
    coords = np.array([[(a + b / 2.0) * spec.h, b * math.sqrt(3) / 2.0 * spec.h]
                       for a, b in pts])
    graph = MetricGraph(ids, mu, ea, eb, np.full(len(ea), spec.h), coords)
    return Domain(graph, interior, ~interior, np.where(interior, 0.0, 1.0))


def ambient_slab(n, h=1.0):
    """Half of an ``n x n`` lattice as the domain, the other half as exterior.

    Rows ``j < n // 2`` are interior, row ``n // 2`` is the boundary and the
    remaining rows are exterior nodes that keep their cell measure.
    """
    if n < 4:
        raise ValueError("ambient_slab needs n >= 4")
    m = n // 2
    ids, mu, coords = [], [], []
    interior, boundary, exterior = [], [], []
    for i in range(n):
        for j in range(n):
            ids.append(f"{i},{j}")
            coords.append([i * h, j * h])
            interior.append(j < m)
            boundary.append(j == m)
            exterior.append(j > m)
            mu.append(0.0 if j == m else h * h)
    index = {s: k for k, s in enumerate(ids)}
    ea, eb = [], []
    for i in range(n):
        for j in range(n):
            for di, dj in ((1, 0), (0, 1)):
                if i + di < n and j + dj < n:
                    ea.append(index[f"{i},{j}"])
                    eb.append(index[f"{i + di},{j + dj}"])
    graph = MetricGraph(ids, np.array(mu), np.array(ea), np.array(eb),
                        np.full(len(ea), h), np.array(coords))
    boundary = np.array(boundary)
    return Domain(graph, np.array(interior), boundary, np.where(boundary, h, 0.0),
                  np.array(exterior))


# -- boundary data ---------------------------------------------------------------


def _farthest_boundary_pair(domain):
    bidx = domain.boundary_idx
    best, pair = -1.0, (bidx[0], bidx[-1])
    for i in bidx:
        d = domain.graph.dist_from(i)[bidx]
        j = int(np.argmax(d))
        if d[j] > best:
            best, pair = float(d[j]), (i, bidx[j])
    return pair, best


def _balance(domain, f, pos, neg):
    # put unit data on `pos` and the exactly balancing negative mass on `neg`
    P = domain.perimeter
    f[pos] = 1.0
    f[neg] = -P[pos].sum() / P[neg].sum()
    return f


def make_boundary_data(domain, kind, seed=0, patch=None):
    """Compatible boundary data as a map boundary-node id -> value.

    ``dipole`` puts -1 on a patch around one end of the farthest boundary pair
    and the balancing positive value around the other end.
    ``constant_sign_patch`` is positive on ``patch`` (default: the boundary
    nodes with the smallest first coordinate) and negative only on the
    boundary nodes farthest from it. ``random_compatible`` draws seeded
    uniform values and removes their perimeter-weighted mean.
    """
    bidx = domain.boundary_idx
    P = domain.perimeter
    f = np.zeros(domain.n)
    if bidx.size < 2:
        log.warning("single boundary node: compatibility forces f = 0")
        return {domain.ids[i]: 0.0 for i in bidx}
    if kind == "dipole":
        (a, b), diam = _farthest_boundary_pair(domain)
        rho = diam / 8.0
        da, db = domain.graph.dist_from(a), domain.graph.dist_from(b)
        near_a = domain.boundary & (da <= rho) & (da < db)
        near_b = domain.boundary & (db <= rho) & (db < da)
        f = _balance(domain, f, near_b, near_a)
        # scale so the patch around the first node carries exactly -1
        f *= 1.0 / -f[a]
    elif kind == "constant_sign_patch":
        if patch is None:
            if domain.graph.coords is None:
                raise ValueError("constant_sign_patch needs coordinates or an explicit patch")
            x = domain.graph.coords[:, 0]
            lo, hi = x[bidx].min(), x[bidx].max()
            pos = domain.boundary & np.isclose(x, lo)
            neg = domain.boundary & np.isclose(x, hi)
        else:
            pos = domain.to_mask(patch) & domain.boundary
            if not pos.any():
                raise ValueError("patch contains no boundary node")
            dmin = np.min([domain.graph.dist_from(i) for i in np.flatnonzero(pos)], axis=0)
            far = dmin[bidx].max()
            neg = domain.boundary & np.isclose(dmin, far) & ~pos
        if not neg.any():
            raise ValueError("no boundary node left for the negative mass")
        f = _balance(domain, f, pos, neg)
    elif kind == "random_compatible":
        rng = np.random.default_rng(seed)
        f[bidx] = rng.uniform(-1.0, 1.0, size=bidx.size)
        f[bidx] -= (f[bidx] * P[bidx]).sum() / P[bidx].sum()
    else:
        raise ValueError(f"unknown boundary data kind {kind!r}")
    return {domain.ids[i]: float(f[i]) for i in bidx}

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumann_plap import domains, space
from neumann_plap.space import DomainError, DomainFormatError, domain_from_json

from conftest import build_domain, grid


def full_grid(n):
    """Unit n x n lattice with every node interior (no corners removed)."""
    nodes = [(f"{i},{j}", 1.0, False) for i in range(n) for j in range(n)]
    edges = [(f"{i},{j}", f"{i + 1},{j}", 1.0) for i in range(n - 1) for j in range(n)]
    edges += [(f"{i},{j}", f"{i},{j + 1}", 1.0) for i in range(n) for j in range(n - 1)]
    return build_domain(nodes, edges)


def unit_path(n):
    ids = [domains.spreadsheet_id(i) for i in range(n)]
    nodes = [(x, 0.0 if k in (0, n - 1) else 1.0, k in (0, n - 1)) for k, x in enumerate(ids)]
    return build_domain(nodes, [(ids[k], ids[k + 1], 1.0) for k in range(n - 1)])


# -- balls ------------------------------------------------------------------------


def test_ball_is_open(path3):
    assert space.ball(path3, "b", 1.0) == {"b"}
    assert space.ball(path3, "b", 1.5) == {"a", "b", "c"}


def test_ball_at_grid_corner():
    d = full_grid(5)
    assert space.ball(d, "0,0", 2.5) == {"0,0", "1,0", "0,1", "2,0", "1,1", "0,2"}


def test_ball_unknown_center(path3):
    with pytest.raises(KeyError):
        space.ball(path3, "zz", 1.0)


@given(st.floats(0.01, 20.0), st.floats(0.01, 20.0), st.integers(0, 63))
def test_balls_nested(r1, r2, center):
    d = full_grid(8)
    lo, hi = sorted((r1, r2))
    x = d.ids[center]
    small, big = space.ball(d, x, lo), space.ball(d, x, hi)
    assert x in small
    assert small <= big


# -- loader -------------------------------------------------------------------------


GOOD = {
    "nodes": [
        {"id": "a", "mu": 0, "boundary": True, "perimeter": 1},
        {"id": "b", "mu": 1, "boundary": False},
        {"id": "c", "mu": 0, "boundary": True, "perimeter": 1},
    ],
    "edges": [{"a": "a", "b": "b", "len": 1}, {"a": "b", "b": "c", "len": 1}],
}


def _text(data):
    return json.dumps(data, indent=2)


def test_loader_roundtrip(path3):
    d = domain_from_json(_text(GOOD))
    assert d.ids == path3.ids
    again = domain_from_json(_text(space.domain_to_dict(d)))
    assert np.array_equal(again.perimeter, d.perimeter)
    assert np.array_equal(again.mu, d.mu)


@pytest.mark.parametrize("mutate, needle", [
    (lambda g: g["nodes"][0].update(mu=2), "must have mu = 0"),
    (lambda g: g["nodes"][0].pop("perimeter"), "needs 'perimeter'"),
    (lambda g: g["nodes"][1].update(perimeter=1.0), "non-boundary"),
    (lambda g: g["edges"][1].update(b="zz"), "unknown node"),
    (lambda g: g["edges"][1].update(len=-1), "len must be > 0"),
    (lambda g: g["nodes"].append(dict(g["nodes"][1])), "duplicate"),
])
def test_loader_rejects_with_line(mutate, needle):
    data = json.loads(json.dumps(GOOD))
    mutate(data)
    text = _text(data)
    with pytest.raises(DomainFormatError) as exc:
        domain_from_json(text)
    assert needle in str(exc.value)
    assert exc.value.line is not None and exc.value.line > 1


def test_loader_line_points_at_record():
    data = json.loads(json.dumps(GOOD))
    data["nodes"][2]["mu"] = 5
    text = _text(data)
    with pytest.raises(DomainFormatError) as exc:
        domain_from_json(text)
    line = text.splitlines()[exc.value.line - 1]
    assert line.strip().startswith("{")
    assert '"c"' in "\n".join(text.splitlines()[exc.value.line - 1:exc.value.line + 2])


def test_boundary_without_interior_edge_rejected():
    with pytest.raises(DomainError):
        build_domain([("a", 0.0, True), ("b", 1.0, False), ("c", 0.0, True), ("d", 0.0, True)],
                     [("a", "b", 1.0), ("b", "c", 1.0), ("c", "d", 1.0)])


def test_disconnected_rejected():
    with pytest.raises(DomainError, match="components"):
        build_domain([("a", 0.0, True), ("b", 1.0, False), ("c", 1.0, False), ("d", 0.0, True)],
                     [("a", "b", 1.0), ("c", "d", 1.0)])


def test_bad_json_reports_line():
    with pytest.raises(DomainFormatError) as exc:
        domain_from_json('{\n "nodes": [\n  {"id": "a",,}\n ]\n}')
    assert exc.value.line == 3


# -- mass exponent and doubling -----------------------------------------------------------


def test_mass_exponent_path():
    d = unit_path(9)
    s, _ = space.estimate_mass_exponent(d, 7, space.default_radii(d))
    assert 0.8 <= s <= 1.2 or s == pytest.approx(1 + 1e-6)


def test_mass_exponent_grid():
    d = grid(16)
    s, _ = space.estimate_mass_exponent(d, 16, space.default_radii(d))
    assert 1.7 <= s <= 2.3


def test_mass_exponent_single_pair():
    d = unit_path(5)
    fit = space.estimate_mass_exponent(d, 1, [1.5], centers=["c"])
    assert fit.s == pytest.approx(1 + 1e-6)
    assert fit.C <= 1.0


def test_mass_fit_holds_on_fresh_sample():
    d = grid(12)
    radii = space.default_radii(d)
    s, C = space.estimate_mass_exponent(d, 6, radii, seed=1)
    masses = space.ball_masses(d, np.arange(d.n), radii)
    worst = np.inf
    for y in np.random.default_rng(99).choice(d.interior_idx, 6, replace=False):
        dy = d.graph.dist_from(y)
        for J, R in enumerate(radii):
            inside = dy < R * (1 - 1e-12)
            for j in range(J + 1):
                m = masses[j, inside]
                m = m[m > 0]
                worst = min(worst, float(np.min(m / masses[J, y] / (radii[j] / R) ** s)))
    # a fresh sample may sit below the fitted C, but only by a bounded factor
    assert worst >= 0.5 * C


def test_doubling_constant_rescan():
    d = grid(10)
    radii = space.default_radii(d)
    cd = space.doubling_constant(d, radii)
    for z in d.interior_idx:
        dz = d.graph.dist_from(z)
        for r in radii:
            small = d.mu[dz < r * (1 - 1e-12)].sum()
            big = d.mu[dz < 2 * r * (1 - 1e-12)].sum()
            assert big <= cd * small * (1 + 1e-12)


# -- density and perimeter regularity -------------------------------------------------------


def test_density_is_one_without_exterior():
    assert space.check_density(grid(8)).worst_ratio == 1.0
    one = build_domain([("a", 0.0, True), ("b", 1.0, False)], [("a", "b", 1.0)])
    assert space.check_density(one).worst_ratio == 1.0


def test_density_half_on_slab():
    d = domains.ambient_slab(12)
    dens = space.check_density(d)
    assert 0.3 <= dens.worst_ratio <= 0.6
    assert dens.witness is not None


@pytest.mark.parametrize("n", [8, 16, 32])
def test_grid_perimeter_regularity(n):
    d = grid(n)
    pr = space.check_perimeter_regularity(d, space.default_radii(d))
    assert max(pr.c_low, pr.c_high) <= 10
    assert not pr.irregular


def test_heavy_perimeter_flagged():
    d = grid(8)
    d.perimeter[d.boundary_idx[3]] = 1e6
    pr = space.check_perimeter_regularity(d, [1.5, 2.5])
    assert pr.irregular
    assert pr.c_high > 1e3


def test_perimeter_regularity_needs_radii():
    with pytest.raises(ValueError):
        space.check_perimeter_regularity(grid(4), [])


# -- Poincare -----------------------------------------------------------------------------


def test_poincare_two_node_edge():
    d = build_domain([("a", 0.0, True), ("x", 1.0, False), ("y", 1.0, False)],
                     [("a", "x", 1.0), ("x", "y", 1.0)])
    c = space.estimate_poincare_constant(d, {"x", "y"}, 2.0, trials=5)
    assert c == pytest.approx(0.5, abs=1e-12)


def test_poincare_rejects_small_ball(path3):
    with pytest.raises(ValueError):
        space.estimate_poincare_constant(path3, {"b"}, 2.0)
    with pytest.raises(ValueError):
        space.estimate_poincare_constant(path3, {"a", "b", "c"}, 1.0)


# -- capacity -------------------------------------------------------------------------------


def test_capacity_five_node_path():
    d = unit_path(5)
    ids = set(d.ids)
    # weights: mu = 1 inside and 0 at the ends, so the end edges carry 1/2
    nodes = [(x, 1.0, False) for x in "abcde"]
    d = build_domain(nodes, [(x, y, 1.0) for x, y in zip("abcd", "bcde")])
    assert space.relative_capacity(d, {"c"}, {"b", "c", "d"}, 2.0) == pytest.approx(
        1.0, abs=1e-10)
    assert space.relative_capacity(d, set(), ids, 2.0) == 0.0
    assert space.relative_capacity(d, {"a"}, {"b"}, 2.0) == math.inf


def test_capacity_forced_indicator():
    nodes = [(x, 1.0, False) for x in "abcde"]
    d = build_domain(nodes, [(x, y, 1.0) for x, y in zip("abcd", "bcde")])
    # E = B2 = {b, c}: cut edges a-b and c-d with weight 1
    assert space.relative_capacity(d, {"b", "c"}, {"b", "c"}, 3.0) == pytest.approx(2.0)


def test_capacity_monotone():
    nodes = [(x, 1.0, False) for x in "abcde"]
    d = build_domain(nodes, [(x, y, 1.0) for x, y in zip("abcd", "bcde")])
    for p in (1.5, 2.0, 3.0):
        c1 = space.relative_capacity(d, {"c"}, {"b", "c", "d"}, p)
        c2 = space.relative_capacity(d, {"c", "d"}, {"b", "c", "d"}, p)
        c3 = space.relative_capacity(d, {"c"}, {"a", "b", "c", "d", "e"}, p)
        assert c1 <= c2 + 1e-12
        assert c3 <= c1 + 1e-12


def test_capacity_bounds_reported():
    d = grid(10)
    cap, C = space.capacity_bound_constants(d, {"4,4"}, "4,4", 2.0, 2.0)
    muE = 1.0
    muB = d.mu[d.ball_mask(d.idx("4,4"), 2.0)].sum()
    assert muE / (C * 2.0 ** 2) <= cap * (1 + 1e-12)
    assert cap <= C * muB / 2.0 ** 2 * (1 + 1e-12)


# -- fine thinness --------------------------------------------------------------------------


def test_thinness_whole_space_zero():
    d = grid(10)
    assert space.fine_thinness_sum(d, "4,4", set(d.ids), 2.0) == 0.0


def test_thinness_far_complement_zero():
    d = grid(10)
    U = set(d.ids) - {"0,1"}
    assert space.fine_thinness_sum(d, "5,5", U, 2.0, dyadic_levels=3, scale=2.0) == 0.0


def test_thinness_single_point_not_thin():
    d = grid(12)
    terms = space.fine_thinness_terms(d, "6,6", {"6,6"}, 2.0, dyadic_levels=3)
    resolved = [t for _, t in terms if t is not None]
    assert resolved
    assert all(t > 0.2 for t in resolved)


# -- diagnostics ----------------------------------------------------------------------------


def test_diagnose_grid_constants():
    diag, _ = space.diagnose(grid(16), 2.0)
    assert 1.7 <= diag.mass_exponent <= 2.3
    assert diag.doubling_constant >= 1
    assert diag.density_constant == 1.0
    assert diag.perimeter_reg_constant >= 1
    assert diag.ahlfors_scale > 0

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumann_plap import domains, space
from neumann_plap.domains import DomainSpec

from conftest import grid


def test_grid3_counts():
    d = domains.generate(DomainSpec("grid", n=3))
    # the four lattice corners touch no interior node and are left out
    assert d.interior.sum() == 1
    assert d.boundary.sum() == 4
    assert d.mu[d.interior].tolist() == [1.0]


def test_grid_measure_and_perimeter_scale_with_h():
    d = domains.generate(DomainSpec("grid", n=6, h=0.5))
    assert np.allclose(d.mu[d.interior], 0.25)
    assert np.allclose(d.perimeter[d.boundary], 0.5)
    assert np.allclose(d.graph.length, 0.5)


def test_unit_conventions():
    d = domains.generate(DomainSpec("grid", n=6, h=0.5, measure="unit", perimeter="unit"))
    assert np.allclose(d.mu[d.interior], 1.0)
    assert np.allclose(d.perimeter[d.boundary], 1.0)


@pytest.mark.parametrize("level, count", [(1, 6), (2, 15), (3, 42)])
def test_sierpinski_node_count(level, count):
    d = domains.generate(DomainSpec("sierpinski", level=level))
    assert d.n == count == (3 ** (level + 1) + 3) // 2
    assert d.boundary.sum() == 3
    assert np.allclose(d.perimeter[d.boundary], 1.0)


def test_path3_is_model():
    d = domains.generate(DomainSpec("path", n=3))
    assert d.ids == ["a", "b", "c"]
    assert d.boundary.tolist() == [True, False, True]
    assert d.mu.tolist() == [0.0, 1.0, 0.0]


def test_parse_shorthands(tmp_path):
    assert DomainSpec.parse("grid:16") == DomainSpec("grid", n=16)
    assert DomainSpec.parse("annulus:18").kind == "annulus_grid"
    assert DomainSpec.parse("gasket:2") == DomainSpec("sierpinski", level=2)
    assert DomainSpec.parse(str(tmp_path / "x.json")).kind == "file"


@pytest.mark.parametrize("spec", [DomainSpec("grid", n=2), DomainSpec("lshape", n=4),
                                  DomainSpec("annulus_grid", n=6)])
def test_degenerate_sizes(spec):
    with pytest.raises(ValueError):
        domains.generate(spec)


def test_bad_spec():
    with pytest.raises(ValueError):
        DomainSpec("torus")
    with pytest.raises(ValueError):
        DomainSpec("grid", h=0)
    with pytest.raises(ValueError):
        DomainSpec("file")


@pytest.mark.parametrize("text", ["grid:8", "lshape:12", "annulus:14", "sierpinski:3",
                                  "path:6"])
def test_generated_domains_valid(text, tmp_path):
    d = domains.generate(DomainSpec.parse(text))
    assert space.check_density(d).worst_ratio == 1.0
    path = tmp_path / "d.json"
    from neumann_plap.serialization import write_json
    write_json(path, space.domain_to_dict(d))
    again = space.load_domain(path)
    assert again.ids == d.ids
    assert np.array_equal(again.boundary, d.boundary)


def test_generation_deterministic():
    a = domains.generate(DomainSpec("annulus_grid", n=14))
    b = domains.generate(DomainSpec("annulus_grid", n=14))
    assert space.domain_to_dict(a) == space.domain_to_dict(b)
    fa = domains.make_boundary_data(a, "random_compatible", seed=5)
    fb = domains.make_boundary_data(b, "random_compatible", seed=5)
    assert fa == fb


def test_path_dipole(path3):
    assert domains.make_boundary_data(path3, "dipole") == {"a": -1.0, "c": 1.0}


@given(st.sampled_from(["dipole", "random_compatible", "constant_sign_patch"]),
       st.sampled_from(["grid:6", "grid:9", "lshape:10", "annulus:12", "sierpinski:2"]),
       st.integers(0, 2 ** 16))
def test_data_compatible(kind, text, seed):
    d = domains.generate(DomainSpec.parse(text))
    f = domains.make_boundary_data(d, kind, seed=seed)
    assert set(f) == set(d.to_ids(d.boundary_idx))
    vals = np.array([f[d.ids[i]] for i in d.boundary_idx])
    P = d.perimeter[d.boundary_idx]
    assert abs(np.sum(vals * P)) <= 1e-14 * np.sum(np.abs(vals) * P)


def test_constant_sign_patch_left_edge():
    d = grid(8)
    f = domains.make_boundary_data(d, "constant_sign_patch")
    x = d.graph.coords[:, 0]
    for i in d.boundary_idx:
        v = f[d.ids[i]]
        if x[i] == x[d.boundary_idx].min():
            assert v > 0
        elif v < 0:
            assert x[i] == x[d.boundary_idx].max()


def test_constant_sign_patch_named():
    d = grid(8)
    f = domains.make_boundary_data(d, "constant_sign_patch", patch={"0,3", "0,4"})
    assert f["0,3"] > 0 and f["0,4"] > 0
    assert all(v >= 0 for k, v in f.items() if k.startswith("0,"))


def test_single_boundary_node_warns(caplog):
    from conftest import build_domain
    d = build_domain([("a", 0.0, True), ("b", 1.0, False)], [("a", "b", 1.0)])
    assert domains.make_boundary_data(d, "dipole") == {"a": 0.0}
    assert "compatibility forces" in caplog.text


def test_unknown_data_kind(path3):
    with pytest.raises(ValueError):
        domains.make_boundary_data(path3, "quadrupole")

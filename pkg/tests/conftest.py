import json
import sys

import numpy as np
import pytest
from hypothesis import settings

from neumann_plap import domains, solver
from neumann_plap.space import domain_from_json

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def build_domain(nodes, edges):
    """Domain from compact records: nodes (id, mu, boundary, perimeter), edges (a, b, len)."""
    recs = []
    for nid, mu, bnd, *rest in nodes:
        rec = {"id": nid, "mu": mu, "boundary": bnd}
        if bnd:
            rec["perimeter"] = rest[0] if rest else 1.0
        recs.append(rec)
    data = {"nodes": recs, "edges": [{"a": a, "b": b, "len": ln} for a, b, ln in edges]}
    return domain_from_json(json.dumps(data, indent=1))


def grid(n, **kw):
    return domains.generate(domains.DomainSpec("grid", n=n, **kw))


@pytest.fixture
def path3():
    return domains.generate(domains.DomainSpec("path", n=3))


@pytest.fixture
def model(path3):
    """The 3-node model problem: f = -1 at a, +1 at c."""
    return solver.assemble(path3, 2.0, {"a": -1.0, "c": 1.0})


@pytest.fixture(scope="session")
def grid16_dipole():
    d = grid(16)
    f = domains.make_boundary_data(d, "dipole")
    prob = solver.assemble(d, 2.0, f)
    return d, f, prob, solver.solve(prob)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])

"""Compare the compiled and the numpy kernel backends.

    python benchmarks/bench_kernels.py --sizes 16 32 64 --repeat 20

Times the energy, force and IRLS-weight kernels on grid domains and one full
solve per backend, and checks that both backends agree.
"""

import argparse
import time

import numpy as np

from neumann_plap import domains, kernels, solver


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(n, p, repeat):
    d = domains.generate(domains.DomainSpec("grid", n=n))
    ea, eb, mask = d.energy_edges()
    coef = d.omega()[mask] / d.graph.length[mask] ** p
    u = np.random.default_rng(0).standard_normal(d.n)
    rows = []
    for name in ("cython", "python"):
        try:
            mod = kernels.backend_module(name)
        except ImportError:
            rows.append((name, None, None, None))
            continue
        t_e = _time(lambda: mod.edge_energy(u, ea, eb, coef, p), repeat)
        t_f = _time(lambda: mod.edge_force(u, ea, eb, coef, p, d.n, 0.0), repeat)
        t_w = _time(lambda: mod.irls_weights(u, ea, eb, coef, p, 1e-12), repeat)
        rows.append((name, t_e, t_f, t_w))
    return d.graph.m, rows


def bench_oracle(repeat):
    d = domains.generate(domains.DomainSpec("path", n=8))
    prob = solver.assemble(d, 3.0, domains.make_boundary_data(d, "dipole"))
    out = {}
    for name in ("cython", "python"):
        try:
            kernels.backend_module(name)
        except ImportError:
            continue
        out[name] = _time(lambda: solver.oracle_minimize(prob, backend=name), repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'grid':>6} {'edges':>7} {'backend':>8} {'energy us':>10} {'force us':>10} "
          f"{'weights us':>11}")
    for n in args.sizes:
        m, rows = bench_kernels(n, args.p, args.repeat)
        for name, te, tf, tw in rows:
            if te is None:
                print(f"{n:>6} {m:>7} {name:>8}   unavailable")
                continue
            print(f"{n:>6} {m:>7} {name:>8} {te * 1e6:>10.1f} {tf * 1e6:>10.1f} {tw * 1e6:>11.1f}")
    oracle = bench_oracle(max(1, args.repeat // 10))
    for name, t in oracle.items():
        print(f"oracle (8-node path, p=3) {name:>8}: {t * 1e3:9.2f} ms")
    if len(oracle) == 2:
        print(f"oracle speed-up: {oracle['python'] / oracle['cython']:.1f}x")


if __name__ == "__main__":
    main()

"""Command-line front end.

Subcommands::

    generate   write domain.json
    solve      write solution.json (u, edge quotients, energy breakdown)
    verify     solve, then write the analysis reports
    diagnose   write diagnostics.json
    full       all of the above

Flags: ``--domain`` (``grid:16``, ``path:3``, ``lshape:16``, ``annulus:16``,
``sierpinski:3`` or a domain JSON file), ``--p``, ``--data`` (``dipole``,
``constant_sign_patch``, ``random_compatible``, a JSON map or a JSON file),
``--seed``, ``--tol``, ``--max-iter``, ``--project-compat``, ``--out``,
``--format json,csv``, ``--threads``, ``--c-budget``. The log level comes
from ``NEUMANN_PLAP_LOG``.

Exit status: 0 when every check passes, 2 when a report holds a breach
witness, 1 on usage, input or convergence errors.

CSV schemas (first row is the header):

* ``degiorgi.csv``: x, r, R, k, lhs, rhs_volume, rhs_boundary, ratio
* ``oscillation.csv``: x, status, R, osc, M, m, nu
* ``boundedness.csv``: x, n, r_n, k_n, u_kn_rn, u_bound, psi_kn_rn, psi_bound, ok
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import analysis, domains, serialization, solver, space
from ._parallel import parallel_map
from .calculus import to_dict

log = logging.getLogger("neumann_plap")

COMMANDS = ("generate", "solve", "verify", "diagnose", "full")
DATA_KINDS = ("dipole", "constant_sign_patch", "random_compatible")
FORMATS = ("json", "csv")

EXIT_OK, EXIT_ERROR, EXIT_BREACH = 0, 1, 2

DEGIORGI_COLUMNS = ["x", "r", "R", "k", "lhs", "rhs_volume", "rhs_boundary", "ratio"]
OSCILLATION_COLUMNS = ["x", "status", "R", "osc", "M", "m", "nu"]
BOUNDEDNESS_COLUMNS = ["x", "n", "r_n", "k_n", "u_kn_rn", "u_bound", "psi_kn_rn", "psi_bound",
                       "ok"]


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    domain: str = "path:3"
    p: float = 2.0
    data: str = "dipole"
    seed: int = 0
    tol: float = 1e-10
    max_iter: int = 100_000
    project_compat: bool = False
    out: str = "."
    formats: tuple = FORMATS
    threads: int = 1
    c_budget: float = 1e3
    samples: int = 32

    def summary(self):
        return {"command": self.command, "domain": self.domain, "p": self.p, "data": self.data,
                "seed": self.seed, "tol": self.tol, "max_iter": self.max_iter,
                "project_compat": self.project_compat, "c_budget": self.c_budget,
                "samples": self.samples}


# -- inputs -------------------------------------------------------------------------


def load_domain(text):
    spec = domains.DomainSpec.parse(text)
    if spec.kind == "file" and not os.path.exists(spec.path):
        raise UsageError(f"unknown domain {text!r} (not a generator spec or an existing file)")
    return domains.generate(spec)


def load_data(domain, text, seed):
    if text in DATA_KINDS:
        return domains.make_boundary_data(domain, text, seed=seed)
    if text.lstrip().startswith("{"):
        raw = text
    elif os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            raw = fh.read()
    else:
        raise UsageError(f"unknown boundary data {text!r}")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"boundary data is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("boundary data must be a JSON object node-id -> number")
    return data


# -- pieces -------------------------------------------------------------------------


class Run:
    """State shared by the stages of one invocation."""

    def __init__(self, config):
        self.cfg = config
        self.domain = load_domain(config.domain)
        self.problem = None
        self.solution = None
        self.breaches = []
        os.makedirs(config.out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.cfg.out, name)

    def json(self, name, obj):
        if "json" in self.cfg.formats:
            serialization.write_json(self.path(name), obj)

    def csv(self, name, header, rows):
        if "csv" in self.cfg.formats:
            serialization.write_csv(self.path(name), header, rows)

    # generate ---------------------------------------------------------------

    def generate(self):
        serialization.write_json(self.path("domain.json"), space.domain_to_dict(self.domain))

    # solve --------------------------------------------------------------------

    def solve(self):
        cfg, d = self.cfg, self.domain
        f = load_data(d, cfg.data, cfg.seed)
        opts = solver.SolverOptions(tol_grad=cfg.tol, max_iter=cfg.max_iter,
                                    project_compat=cfg.project_compat, seed=cfg.seed)
        self.problem = solver.assemble(d, cfg.p, f, opts)
        sol = solver.solve(self.problem)
        self.solution = sol
        r_int, r_bnd = solver.euler_lagrange_residual(self.problem, sol.u)
        report = {
            "config": cfg.summary(),
            "u": to_dict(d, sol.u),
            "f": self.problem.f_dict(),
            "edge_quotients": sol.gradient.edges_dict(d),
            "energy": {"total": sol.energy, "dirichlet": sol.dirichlet_part,
                       "boundary": sol.boundary_part},
            "bounds": {"energy_lower": solver.energy_lower_bound(self.problem),
                       "trace_constant": solver.trace_constant(self.problem)},
            "iterations": sol.iterations,
            "residuals": {"max": sol.residual, "interior": r_int, "boundary": r_bnd},
            "converged": sol.converged,
            "message": sol.message,
            "uniqueness_note": solver.MinimizerSetReport.unique_note,
        }
        serialization.write_json(self.path("solution.json"), report)
        if not sol.converged:
            raise solver.ConvergenceError(sol)

    # diagnose --------------------------------------------------------------------

    def diagnose(self):
        cfg, d = self.cfg, self.domain
        diag, extras = space.diagnose(d, cfg.p, seed=cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        h = d.max_edge_length()
        caps = []
        picks = rng.choice(d.interior_idx, size=min(3, d.interior_idx.size), replace=False)
        for z in sorted(int(i) for i in picks):
            nid = d.ids[z]
            cap, const = space.capacity_bound_constants(d, {nid}, nid, 2.0 * h, cfg.p)
            caps.append({"x": nid, "r": 2.0 * h, "capacity": cap, "bound_constant": const})
        perim = extras["perimeter"]
        report = {
            "config": cfg.summary(),
            "s": diag.mass_exponent,
            "mass_constant": diag.mass_constant,
            "doubling_constant": diag.doubling_constant,
            "poincare_constant": diag.poincare_constant,
            "density_constant": diag.density_constant,
            "perimeter_regularity": None if perim is None else {
                "c_low": perim.c_low, "c_high": perim.c_high,
                "irregular": perim.irregular, "constant": diag.perimeter_reg_constant},
            "ahlfors_scale": diag.ahlfors_scale,
            "capacity_samples": caps,
        }
        serialization.write_json(self.path("diagnostics.json"), report)

    # verify --------------------------------------------------------------------------

    def verify(self):
        cfg, d, sol = self.cfg, self.domain, self.solution
        f = self.problem.f
        p = cfg.p

        sample = analysis.degiorgi_samples(d, sol.u, cfg.samples, seed=cfg.seed)
        dg = analysis.check_degiorgi(d, sol, f, p, sample, c_budget=cfg.c_budget,
                                     threads=cfg.threads)
        rows = [dict(serialization.to_jsonable(r), ratio=r.ratio) for r in dg.rows]
        self.json("degiorgi.json", {"max_ratio": dg.max_ratio, "c_budget": dg.c_budget,
                                    "measured_constant": dg.measured_constant,
                                    "gradient": dg.gradient, "passed": dg.passed,
                                    "vacuous_violations": dg.vacuous_violations, "rows": rows})
        self.csv("degiorgi.csv", DEGIORGI_COLUMNS, rows)
        if not dg.passed:
            self.breaches.append("degiorgi")

        ms = solver.verify_minimizer_set(self.problem, runs=4, seed=cfg.seed)
        self.json("minimizer_set.json", ms)
        if ms.status == "not converged":
            raise solver.ConvergenceError(self.solution)
        if ms.breach:
            self.breaches.append("minimizer_set")

        self._regularity(dg.measured_constant)

        sub = self._subminimizer()
        self.json("subminimizer.json", sub)
        if sub.get("passed") is False:
            self.breaches.append("subminimizer")

        nb = analysis.natural_boundary_check(d, sol, f)
        self.json("natural_boundary.json", {"tol": nb.tol, "tol_f": nb.tol_f,
                                            "passed": nb.passed,
                                            "constancy_balls": nb.constancy_balls,
                                            "violations": nb.violations})
        if not nb.passed:
            self.breaches.append("natural_boundary")

    def _regularity(self, C):
        cfg, d, sol, f = self.cfg, self.domain, self.solution, self.problem.f
        fit = space.estimate_mass_exponent(d, 16, space.default_radii(d), seed=cfg.seed)
        s_used = analysis.effective_dimension(fit.s, cfg.p)
        head = {"s_fit": fit.s, "s_used": s_used}
        try:
            params = analysis.with_constant(analysis.compute_exponents(s_used, cfg.p), C)
        except analysis.TheoryInapplicable as exc:
            msg = {**head, "status": str(exc)}
            self.json("boundedness.json", msg)
            self.json("oscillation.json", msg)
            self.csv("oscillation.csv", OSCILLATION_COLUMNS, [])
            self.csv("boundedness.csv", BOUNDEDNESS_COLUMNS, [])
            return
        head["params"] = params
        head["conditions"] = analysis.sigma_tau_conditions(params)

        if params.eligible:
            R = d.diameter(d.closed) / 5.0

            def one(x):
                try:
                    return analysis.boundedness_iteration(d, sol, f, int(x), R, params)
                except ValueError as exc:
                    return {"x": d.ids[x], "status": f"unresolved: {exc}"}

            reps = parallel_map(one, list(d.boundary_idx), cfg.threads)
            ok = all(not isinstance(r, analysis.BoundednessReport) or r.passed for r in reps)
            self.json("boundedness.json", {**head, "R": R, "passed": ok, "reports": reps})
            self.csv("boundedness.csv", BOUNDEDNESS_COLUMNS,
                     [dict(row, x=r.x) for r in reps
                      if isinstance(r, analysis.BoundednessReport) for row in r.rows])
            if not ok:
                self.breaches.append("boundedness")
        else:
            self.json("boundedness.json", {**head, "status": "ineligible exponents"})
            self.csv("boundedness.csv", BOUNDEDNESS_COLUMNS, [])

        scan = analysis.oscillation_scan(d, sol, f, params, threads=cfg.threads)
        self.json("oscillation.json", {**head, "inapplicable": scan.inapplicable,
                                       "exceptions": scan.exceptions, "passed": scan.passed,
                                       "reports": scan.reports})
        rows = [{"x": r.x, "status": r.status, "R": R_, "osc": o, "M": M, "m": m, "nu": nu}
                for r in scan.reports
                for R_, o, M, m, nu in zip(r.radii, r.osc, r.M, r.m, r.nu)]
        rows += [{"x": r.x, "status": r.status} for r in scan.reports if not r.radii]
        self.csv("oscillation.csv", OSCILLATION_COLUMNS, rows)
        if not scan.passed:
            self.breaches.append("oscillation")

    def _subminimizer(self):
        d, f = self.domain, self.problem.f
        r = 3.0 * d.max_edge_length()
        order = sorted(d.boundary_idx, key=lambda i: (-f[i], i))
        for x in order:
            ball = d.ball_mask(x, r) & d.boundary
            if f[x] >= 0 and not np.any(f[ball] < 0):
                rep = analysis.subminimizer_check(d, self.solution, int(x), r, f, self.cfg.p,
                                                  trials=200, seed=self.cfg.seed)
                return serialization.to_jsonable(rep)
        return {"status": "no boundary ball with f >= 0", "passed": None}


def run(config):
    """Execute one command; returns the exit status."""
    if config.command not in COMMANDS:
        raise UsageError(f"unknown command {config.command!r}")
    r = Run(config)
    cmd = config.command
    if cmd in ("generate", "full"):
        r.generate()
    if cmd == "diagnose":
        r.diagnose()
    if cmd in ("solve", "verify", "full"):
        r.solve()
    if cmd == "full":
        r.diagnose()
    if cmd in ("verify", "full"):
        r.verify()
    if r.breaches:
        print("theory-breach witness in: " + ", ".join(r.breaches))
        return EXIT_BREACH
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------


def _formats(text):
    out = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [t for t in out if t not in FORMATS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {FORMATS}")
    return out


def build_parser():
    ap = argparse.ArgumentParser(prog="neumann-plap",
                                 description="Neumann p-Laplacian on metric graphs")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--domain", default="path:3",
                        help="generator spec (grid:16, path:3, ...) or domain JSON file")
        sp.add_argument("--p", type=float, default=2.0)
        sp.add_argument("--data", default="dipole",
                        help="dipole, constant_sign_patch, random_compatible, JSON map or file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=1e-10, help="gradient tolerance")
        sp.add_argument("--max-iter", type=int, default=100_000)
        sp.add_argument("--project-compat", action="store_true",
                        help="subtract the perimeter-weighted mean of f")
        sp.add_argument("--out", default=".")
        sp.add_argument("--format", type=_formats, default=FORMATS, dest="formats")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--c-budget", type=float, default=1e3)
        sp.add_argument("--samples", type=int, default=32, help="De Giorgi tuples")
    return ap


def _setup_logging():
    level = os.environ.get("NEUMANN_PLAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if not args.p > 1 or not math.isfinite(args.p):
        print("error: --p must be a finite number > 1", file=sys.stderr)
        return EXIT_ERROR
    if args.threads < 1 or args.samples < 1:
        print("error: --threads and --samples must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    cfg = RunConfig(command=args.command, domain=args.domain, p=args.p, data=args.data,
                    seed=args.seed, tol=args.tol, max_iter=args.max_iter,
                    project_compat=args.project_compat, out=args.out, formats=args.formats,
                    threads=args.threads, c_budget=args.c_budget, samples=args.samples)
    try:
        return run(cfg)
    except solver.CompatibilityError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except solver.ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point ``dini-reglab``.

Experiments:  dini-reglab <experiment> [--config cfg.json] [--out dir] [--expect]
Tools:        modulus check | counterexample | probe | solve | adjoint {solve,iterate,continuity}

Exit codes: 0 success, 2 verdict mismatch (with --expect), 1 operational error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import RegLabError
from .experiments import EXPERIMENTS, ExperimentConfig, _as_float, _jsonable, bump, run_experiment, write_rows

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2


def _print_json(obj, fh=None):
    json.dump(_jsonable(obj), fh or sys.stdout, indent=2, sort_keys=True)
    (fh or sys.stdout).write("\n")


def _print_csv(rows, fh=None):
    fh = fh or sys.stdout
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    w = csv.writer(fh)
    w.writerow(keys)
    for r in rows:
        w.writerow([repr(float(r[k])) if isinstance(r.get(k), (float, np.floating)) else r.get(k, "") for k in keys])


def _emit(rows, summary, out, csv_name, json_name="summary.json"):
    """Write rows and summary into ``out``, or print CSV, a blank line and JSON."""
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        write_rows(d / csv_name, rows)
        with open(d / json_name, "w") as fh:
            _print_json(summary, fh)
    else:
        _print_csv(rows)
        print()
        _print_json(summary)


def _point(text):
    return tuple(float(v) for v in text.split(","))


# ---------------------------------------------------------------------------
# experiments


def cmd_experiment(args):
    from .plots import emit_plots

    if args.config:
        cfg = ExperimentConfig.load(args.config, args.experiment)
    else:
        cfg = ExperimentConfig(args.experiment)
    out = args.out or cfg.out or f"out/{cfg.experiment}"
    report = run_experiment(cfg)
    paths = report.write(out)
    paths += emit_plots(report, out)
    for k, v in sorted(report.verdicts.items()):
        print(f"{k}: {v}")
    print(f"wrote {len(paths)} files to {out}")
    if args.expect:
        bad = report.mismatches(cfg.expect)
        for k, (want, got) in sorted(bad.items()):
            print(f"MISMATCH {k}: expected {want}, got {got}", file=sys.stderr)
        if bad:
            return EXIT_MISMATCH
    return EXIT_OK


# ---------------------------------------------------------------------------
# tools


def cmd_modulus_check(args):
    from .experiments import modulus_summary
    from .moduli import ModulusSpec

    _print_json([modulus_summary(ModulusSpec.parse(s), args.samples) for s in args.spec])
    return EXIT_OK


def cmd_counterexample(args):
    from . import counterexamples as ce

    rows = []
    if args.kind == "w21":
        par = ce.W21Params(gamma=args.gamma, logR=args.logR or 10.0, dim=args.n)
        r = np.geomspace(args.r_min, 1.0, args.samples)
        u, du, d2u = ce.w21_derivs(par, r)
        a = ce.w21_alpha(par, r)
        rows = [{"r": float(ri), "u": float(ui), "du": float(di), "d2u": float(d2), "alpha": float(ai)}
                for ri, ui, di, d2, ai in zip(r, u, du, d2u, a)]
    else:
        par = ce.BMOParams(logR=args.logR, dim=args.n)
        r = np.geomspace(args.r_min, 1.0, args.samples)
        th = np.linspace(0, 2 * np.pi, 8, endpoint=False)
        R_, T_ = np.meshgrid(r, th, indexing="ij")
        x = np.stack([R_.ravel() * np.cos(T_.ravel()), R_.ravel() * np.sin(T_.ravel())], axis=-1)
        if args.n > 2:
            x = np.concatenate([x, np.zeros((len(x), args.n - 2))], axis=-1)
        d12 = ce.bmo_d12(par, x)
        a = ce.bmo_alpha(par, R_.ravel())
        rows = [{"x1": float(p[0]), "x2": float(p[1]), "d12u": float(d), "alpha": float(ai)}
                for p, d, ai in zip(x, d12, a)]
    _print_csv(rows)
    return EXIT_OK


def cmd_probe(args):
    from . import counterexamples as ce
    from .experiments import bmo_slope_prediction
    from .quadrature import bmo_probe, exp_integral_probe, lp_divergence_probe

    if args.family == "w21":
        par = ce.W21Params(gamma=args.gamma, logR=args.logR or 10.0, dim=2)

        def hess(x):
            return ce.w21_hessian(par, x)
    else:
        par = ce.BMOParams(logR=args.logR, dim=2)

        def hess(x):
            return ce.bmo_solution(par, x)[2]

    if args.kind == "bmo":
        if args.family != "bmo":
            raise RegLabError("the BMO probe applies to the bmo family")
        k = np.arange(1, args.levels + 1)
        pr = bmo_probe(lambda x: ce.bmo_d12(par, x), (0.0, 0.0), 2.0 ** -k, args.tol)
        vals = pr.values
        rows = [{"k": int(kk), "increment": float(v), "ratio": float(v / vals[i - 1]) if i else math.nan}
                for i, (kk, v) in enumerate(zip(k, vals))]
        summary = {"verdict": "increasing" if np.all(np.diff(vals) > 0) else "not increasing",
                   "slope": pr.growth_slope, "predicted_slope": bmo_slope_prediction()}
    else:
        if args.kind == "lp":
            v = lp_divergence_probe(lambda x: np.linalg.norm(hess(x), axis=(-2, -1)), args.p, args.levels,
                                    tol=args.tol)
        else:
            if args.family != "bmo":
                raise RegLabError("the exponential probe applies to the bmo family")
            v = exp_integral_probe(lambda x: ce.bmo_d12(par, x), args.N, args.c, args.levels, tol=args.tol)
        logs = v.log_increments
        rows = [{"k": int(kk), "increment": float(np.exp(li)),
                 "ratio": float(np.exp(li - logs[i - 1])) if i else math.nan}
                for i, (kk, li) in enumerate(zip(v.levels, logs))]
        summary = {"verdict": v.verdict, "fitted_ratio": v.fitted_ratio, "exponent": v.exponent, **v.extras}
    _emit(rows, summary, args.out, "probe.csv", "verdict.json")
    return EXIT_OK


def _rhs(text, seed):
    from .fdsolver import random_rhs

    name, _, arg = text.partition(":")
    if name == "random":
        return random_rhs(int(arg or seed))
    if name == "const":
        c = float(arg or 1.0)
        return lambda x: np.full(np.shape(x)[:-1], c)
    if name == "bump":
        return bump(float(arg or 10.0))
    raise RegLabError(f"unknown right-hand side {text!r} (random[:seed] | const[:c] | bump[:amp])")


def _field(text, logR=None, gamma=None):
    from .fields import parse_field

    name = text.partition(":")[0]
    kw = {}
    if name == "w21":
        kw = {"gamma": gamma or 2.0, "logR": logR or 10.0}
    elif name == "bmo" and logR:
        kw = {"logR": logR}
    return parse_field(text, **kw)


def cmd_solve(args):
    from .fdsolver import Grid2D, GridFunction, SolverConfig, assemble, solve_dirichlet
    from .fdsolver.io import save_grid_function, write_csv
    from .quadrature import discrete_w2p

    g = Grid2D(args.h, args.domain)
    fld = _field(args.coeff, args.logR, args.gamma)
    op = assemble(fld, g)
    fv = _rhs(args.rhs, args.seed)(g.interior_points)
    u, stats = solve_dirichlet(op, fv, 0.0, SolverConfig(method=args.method, rel_tol=args.tol))
    f_norm = GridFunction(g, fv).lp(args.p)
    w2p = discrete_w2p(u, args.p)
    summary = {"coeff": fld.name, "h": g.h, "domain": args.domain, "n_interior": g.n_interior,
               "iterations": stats.iterations, "rel_residual": stats.rel_residual, "converged": stats.converged,
               "w2p": w2p, "f_lp": f_norm, "cz_ratio": w2p / f_norm if f_norm > 0 else math.nan}
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        save_grid_function(d / "u.bin", u)
        write_csv(d / "u.csv", u)
        with open(d / "summary.json", "w") as fh:
            _print_json(summary, fh)
    _print_json(summary)
    return EXIT_OK


def _adjoint_base(args):
    """(grid, field, zeta, solution) for an adjoint problem with a bump source."""
    from .adjoint import AdjointData, assemble_adjoint_rhs, solve_adjoint
    from .fdsolver import Grid2D, assemble
    from .fields import HolderField

    beta = float(args.theta.partition(":")[2] or 0.5)
    centers = getattr(args, "centers_list", None) or [_point(args.center)]
    fld = HolderField(beta, args.kappa, kinks=centers)
    zeta = bump(args.amp)
    g = Grid2D(args.h)
    op = assemble(fld, g)
    sol = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(eta=zeta, p=args.p), g, op), p=args.p)
    return g, fld, zeta, sol


def cmd_adjoint_solve(args):
    from .adjoint import AdjointData, assemble_adjoint_rhs, solve_adjoint
    from .fdsolver import Grid2D, assemble
    from .fdsolver.io import save_grid_function, write_csv

    g = Grid2D(args.h, args.domain)
    fld = _field(args.coeff, args.logR, args.gamma)
    op = assemble(fld, g)
    Phi = None
    if args.phi != "zero":
        f11, f22, f12 = (_rhs(args.phi, args.seed + i) if args.phi.startswith("random") and ":" not in args.phi
                         else _rhs(args.phi, args.seed) for i in range(3))

        def Phi(x):
            P = np.empty(np.shape(x)[:-1] + (2, 2))
            P[..., 0, 0], P[..., 1, 1] = f11(x), f22(x)
            P[..., 0, 1] = P[..., 1, 0] = f12(x)
            return P

    eta = None if args.eta == "zero" else _rhs(args.eta, args.seed + 3)
    psi = None if args.psi == "zero" else _rhs(args.psi, args.seed + 4)
    data = AdjointData(Phi=Phi, eta=eta, psi=psi, p=args.p)
    sol = solve_adjoint(op, assemble_adjoint_rhs(data, g, op), p=args.p, n_tests=args.tests, seed=args.seed)
    summary = {"coeff": fld.name, "h": g.h, "domain": args.domain, "p": args.p, "lp_norm": sol.norm,
               "duality_defect": sol.duality_residual, "iterations": sol.stats.iterations,
               "rel_residual": sol.stats.rel_residual}
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        save_grid_function(d / "v.bin", sol.v)
        write_csv(d / "v.csv", sol.v)
        with open(d / "summary.json", "w") as fh:
            _print_json(summary, fh)
    _print_json(summary)
    return EXIT_OK


def cmd_adjoint_iterate(args):
    from .adjoint import (M_DEFAULT, dyadic_iteration, induction_constant, interior_estimate_constant,
                          normalization, select_delta, transported_omega)

    g, fld, zeta, sol = _adjoint_base(args)
    c = _point(args.center)
    omega, _ = transported_omega(fld.modulus, normalization(fld, c, 0.25))
    auto = select_delta(omega, M_DEFAULT, args.p)
    delta = auto if args.delta == "auto" else float(args.delta)
    seq = dyadic_iteration(sol.v, fld, zeta, args.levels, args.p, delta, c)
    summary = {"M": M_DEFAULT, "C(n,p)": interior_estimate_constant(args.p), "C": induction_constant(M_DEFAULT, args.p),
               "delta": delta, "delta_auto": auto, "delta_bar": seq.delta_bar, "levels": seq.levels,
               "W_ratio_spread": seq.W_ratio_spread() if seq.levels > 2 else math.nan,
               "truncated": seq.truncated, "adjoint_duality_defect": sol.duality_residual}
    _emit(seq.rows(), summary, args.out, "induction.csv")
    return EXIT_OK


def _read_centers(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].strip().startswith("#")]
    out = []
    for r in rows:
        try:
            out.append((float(r[0]), float(r[1])))
        except ValueError:
            continue  # header line
    if not out:
        raise RegLabError(f"no centers in {path}")
    return out


def cmd_adjoint_continuity(args):
    from .adjoint import M_DEFAULT, continuity_estimate, induction_constant

    args.centers_list = _read_centers(args.centers)
    g, fld, zeta, sol = _adjoint_base(args)
    radii = [float(r) for r in args.radii.split(",")]
    rows, per_center = [], []
    for i, c in enumerate(args.centers_list):
        est = continuity_estimate(sol.v, fld, zeta, c, radii, args.levels, args.p, args.delta)
        rows.extend({"center": i, "x": c[0], "y": c[1], **r} for r in est.rows())
        per_center.append({"center": list(c), "a": est.limit_value, "C": est.C, "fit_residual": est.fit_residual,
                           "decay": est.decay, "monotone": est.monotone, "flagged": est.flagged})
    summary = {"M": M_DEFAULT, "C_induction": induction_constant(M_DEFAULT, args.p), "delta": args.delta,
               "h": g.h, "centers": per_center}
    _emit(rows, summary, args.out, "continuity.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(prog="dini-reglab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="JSON experiment configuration")
        s.add_argument("--out", help="output directory (default out/<experiment>)")
        s.add_argument("--expect", action="store_true", help="exit 2 when a verdict differs from the config's expect block")
        s.set_defaults(func=cmd_experiment, experiment=name)

    m = sub.add_parser("modulus", help="modulus tools").add_subparsers(dest="action", required=True)
    s = m.add_parser("check", help="Dini verdict, doubling and regularization as JSON")
    s.add_argument("spec", nargs="+", help="power:0.5 | log_inverse:1 | log_power:2 | JSON object")
    s.add_argument("--samples", type=int, default=1000)
    s.set_defaults(func=cmd_modulus_check)

    s = sub.add_parser("counterexample", help="sample a counterexample as CSV")
    s.add_argument("kind", choices=("w21", "bmo"))
    s.add_argument("--logR", type=float, default=None, help="default 10 for w21, searched for bmo")
    s.add_argument("--gamma", type=float, default=2.0)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--r-min", dest="r_min", type=float, default=1e-6)
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("probe", help="dyadic probes: CSV (k, increment, ratio) and a JSON verdict")
    s.add_argument("kind", choices=("lp", "bmo", "expint"))
    s.add_argument("--family", choices=("w21", "bmo"), default=None)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--levels", type=int, default=20)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--N", type=float, default=1.0)
    s.add_argument("--c", type=float, default=0.0)
    s.add_argument("--logR", type=float, default=None)
    s.add_argument("--gamma", type=float, default=2.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("solve", help="Dirichlet solve of tr(A D^2 u) = f with u = 0 on the boundary")
    s.add_argument("--coeff", default="identity", help="identity | w21 | bmo | holder:beta | smooth")
    s.add_argument("--h", type=_as_float, default=1 / 64)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--rhs", default="random", help="random[:seed] | const[:c] | bump[:amp]")
    s.add_argument("--domain", choices=("disc", "square"), default="disc")
    s.add_argument("--method", default="bicgstab")
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--logR", type=float, default=None)
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("adjoint", help="adjoint tools").add_subparsers(dest="action", required=True)
    s = a.add_parser("solve", help="adjoint solution by transposition")
    s.add_argument("--coeff", default="identity")
    s.add_argument("--phi", default="zero", help="zero | random[:seed] | const[:c] | bump[:amp]")
    s.add_argument("--eta", default="zero")
    s.add_argument("--psi", default="zero")
    s.add_argument("--h", type=_as_float, default=1 / 64)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--domain", choices=("disc", "square"), default="disc")
    s.add_argument("--tests", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--logR", type=float, default=None)
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_adjoint_solve)

    for name, fn, help_ in (("iterate", cmd_adjoint_iterate, "dyadic iteration around a center"),
                            ("continuity", cmd_adjoint_continuity, "mean-oscillation decay around centers")):
        s = a.add_parser(name, help=help_)
        s.add_argument("--theta", default="holder:0.5", help="holder:beta coefficient field")
        s.add_argument("--kappa", type=float, default=0.5)
        s.add_argument("--amp", type=float, default=10.0, help="amplitude of the bump source")
        s.add_argument("--h", type=_as_float, default=1 / 256)
        s.add_argument("--p", type=float, default=2.0)
        s.add_argument("--out")
        if name == "iterate":
            s.add_argument("--levels", type=int, default=4)
            s.add_argument("--delta", default="1", help="a number in (0, 1] or auto")
            s.add_argument("--center", default="0,0")
        else:
            s.add_argument("--centers", required=True, help="CSV file with x,y per line")
            s.add_argument("--radii", default="0.25,0.125,0.0625,0.03125")
            s.add_argument("--levels", type=int, default=8)
            s.add_argument("--delta", type=float, default=1.0)
        s.set_defaults(func=fn)
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors are operational, not verdict mismatches
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    if getattr(args, "command", None) == "probe" and args.family is None:
        args.family = "w21" if args.kind == "lp" else "bmo"
    try:
        return args.func(args)
    except (RegLabError, ValueError, OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

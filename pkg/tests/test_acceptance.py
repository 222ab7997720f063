"""The nine acceptance criteria, each at its stated tolerance and time budget.

Run with ``pytest tests/test_acceptance.py -s`` to see the pass/fail lines as
they happen; they are also collected in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from dini_reglab.adjoint import (AdjointData, assemble_adjoint_rhs, continuity_estimate, dyadic_iteration,
                                 solve_adjoint)
from dini_reglab.counterexamples import (BMOParams, W21Params, apply_operator, bmo_d12, bmo_residual,
                                         coefficient_field, w21_hessian, w21_hessian_norm)
from dini_reglab.experiments import ExperimentConfig, bump, continuity_setup, run_experiment
from dini_reglab.fdsolver import Grid2D, GridFunction, SolverConfig, assemble, solve_dirichlet
from dini_reglab.fields import HolderField, SmoothRadialField, identity_field
from dini_reglab.moduli import ModulusSpec, dini_integral, eval_modulus, regularize
from dini_reglab.quadrature import bmo_probe, exp_integral_probe, lp_divergence_probe

DIRECT = SolverConfig("direct")
SOLVER_TOL = SolverConfig().rel_tol


def polar_points(r, n_theta):
    th = (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
    return np.stack([r[None, :] * np.cos(th)[:, None], r[None, :] * np.sin(th)[:, None]], axis=-1)


def test_criterion_1_closed_form_residuals(criterion):
    c = criterion(1, "closed-form residuals of both constructions", 1.0)
    x = polar_points(np.geomspace(1e-6, 1.0, 1000), 8)
    w21 = W21Params(gamma=2.0, logR=10.0)
    H = w21_hessian(w21, x)
    res = apply_operator(coefficient_field(w21.alpha_profile()), H, x)
    worst_w21 = float(np.max(np.abs(res) / np.linalg.norm(H, axis=(-2, -1))))
    res_b, scale_b = bmo_residual(BMOParams(), x)
    worst_bmo = float(np.max(np.abs(res_b) / scale_b))
    c.check("W21", worst_w21 <= 1e-9, f"{worst_w21:.1e}")
    c.check("BMO", worst_bmo <= 1e-9, f"{worst_bmo:.1e}")
    c.finish()


def w21_norm_oracle(r):
    # eigenvalues u'' and u'/r of the Hessian for n = 2, gamma = 2, log R = 10
    L = 10.0 + np.log(1 / r)
    return np.hypot(r ** -2 * L ** -2 * (1 - 2 / L), r ** -2 * L ** -2)


def test_criterion_2_lp_divergence(criterion):
    c = criterion(2, "dyadic L^p probe of the W21 Hessian", 30.0)
    par = W21Params(gamma=2.0, logR=10.0)
    f = lambda x: w21_hessian_norm(par, np.linalg.norm(x, axis=-1))
    v1 = lp_divergence_probe(f, 1.0, 20)
    oracle = np.array([2 * math.pi * integrate.quad(lambda s: w21_norm_oracle(math.exp(s)) * math.exp(2 * s),
                                                    -(k + 1) * math.log(2), -k * math.log(2),
                                                    epsabs=0, epsrel=1e-12)[0] for k in range(21)])
    dev = float(np.max(np.abs(v1.increments / oracle - 1)))
    c.check("p=1 convergent", v1.verdict == "convergent", v1.verdict)
    c.check("p=1 increments", dev <= 0.1, f"max rel dev {dev:.1e}")
    for p in (1.1, 2.0):
        v = lp_divergence_probe(f, p, 20)
        target = 2 ** (2 * p - 2)
        c.check(f"p={p} divergent", v.verdict == "divergent", v.verdict)
        c.check(f"p={p} ratio", abs(v.fitted_ratio / target - 1) <= 0.1, f"{v.fitted_ratio:.4f} vs {target:.4f}")
    c.finish()


def slope_oracle():
    """2 log 2 times the mean absolute deviation of s + sin^2(2 theta)/2, s ~ Exp(2)."""
    inner = lambda s, th: 2 * math.exp(-2 * s) * abs(s + math.sin(2 * th) ** 2 / 2 - 0.75) / (2 * math.pi)
    val = sum(4 * integrate.dblquad(inner, a, b, 0, 40, epsabs=1e-12, epsrel=1e-10)[0]
              for a, b in ((0, math.pi / 4), (math.pi / 4, math.pi / 2)))
    return 2 * math.log(2) * val


def test_criterion_3_bmo_failure(criterion):
    c = criterion(3, "mixed derivative escapes BMO and exponential integrability", 60.0)
    par = BMOParams()
    f = lambda x: bmo_d12(par, x)
    probe = bmo_probe(f, (0.0, 0.0), 2.0 ** -np.arange(5, 16))
    c.check("increasing", np.all(np.diff(probe.values) > 0), f"{probe.values[0]:.3f} -> {probe.values[-1]:.3f}")
    pred = slope_oracle()
    c.check("slope", probe.growth_slope >= 0.5 * pred, f"{probe.growth_slope:.4f} vs 0.5 x {pred:.4f}")
    for N in (1.0, 0.25):
        for cc in (0.0, 10.0, 100.0):
            v = exp_integral_probe(f, N, cc, 20)
            c.check(f"expint N={N:g} c={cc:g}", v.verdict == "divergent", v.verdict)
    c.finish()


def manufactured(h, field):
    P = math.pi
    u = lambda x: np.sin(P * x[..., 0]) * np.sin(P * x[..., 1])
    mixed = lambda x: P * P * np.cos(P * x[..., 0]) * np.cos(P * x[..., 1])
    f = lambda x: np.einsum("...ij,...ij->...", field(x),
                            np.stack([np.stack([-P * P * u(x), mixed(x)], -1),
                                      np.stack([mixed(x), -P * P * u(x)], -1)], -2))
    grid = Grid2D(h)
    uh, _ = solve_dirichlet(assemble(field, grid), f, u)
    return float(np.max(np.abs(uh.values - u(grid.interior_points))))


def test_criterion_4_solver_order(criterion):
    c = criterion(4, "second-order solver and quadratic exactness", 120.0)
    field = SmoothRadialField(0.25)
    hs = [1 / 32, 1 / 64, 1 / 128, 1 / 256]
    errs = np.array([manufactured(h, field) for h in hs])
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    pair_orders = np.log2(errs[:-1] / errs[1:])
    c.check("order", order >= 1.9, f"fit {order:.3f}, pairs {np.round(pair_orders, 3).tolist()}")
    grid = Grid2D(1 / 256)
    op = assemble(field, grid)
    coef = np.random.default_rng(0).standard_normal(6)
    q = lambda x: coef[0] + coef[1] * x[..., 0] + coef[2] * x[..., 1] + coef[3] * x[..., 0] ** 2 \
        + coef[4] * x[..., 0] * x[..., 1] + coef[5] * x[..., 1] ** 2
    D2 = np.array([[2 * coef[3], coef[4]], [coef[4], 2 * coef[5]]])
    exact = np.einsum("nij,ij->n", field(grid.interior_points), D2)
    qh = GridFunction.sample(grid, q)
    full = grid.depth > 1.5
    raw = np.abs(op.apply(qh) - exact)[full]
    row_l1 = float(np.max(np.abs(op.A_II).sum(axis=1).A.ravel() + np.abs(op.B).sum(axis=1).A.ravel()))
    scale = row_l1 * max(qh.max_abs(), float(np.max(np.abs(qh.boundary))))
    normalized = float(raw.max() / scale)
    c.check("quadratic", normalized <= 1e-12, f"normalized {normalized:.1e} (raw {raw.max():.1e})")
    c.finish()


def adjoint_data():
    return AdjointData(Phi=lambda x: np.einsum("n,ij->nij", np.cos(2 * x[:, 0]) * x[:, 1],
                                               np.array([[1.0, 0.4], [0.4, 0.5]])),
                       eta=lambda x: 1 + x[:, 0] * x[:, 1], psi=lambda x: np.sin(3 * x[:, 0]) + x[:, 1])


def test_criterion_5_adjoint_duality(criterion):
    c = criterion(5, "adjoint duality by transposition", 120.0)
    fields = {"identity": identity_field(), "holder:0.5": HolderField(0.5, 0.5),
              "holder:0.25": HolderField(0.25, 0.5, kinks=[(0.1, -0.2), (-0.3, 0.3)])}
    for name, fld in fields.items():
        grid = Grid2D(1 / 128)
        op = assemble(fld, grid)
        sol = solve_adjoint(op, assemble_adjoint_rhs(adjoint_data(), grid, op), n_tests=20, seed=7)
        c.check(name, sol.duality_residual <= 1e-8, f"{name} defect {sol.duality_residual:.1e}")
    grid = Grid2D(1 / 128, "square")
    op = assemble(identity_field(), grid)
    eta = bump(10.0, 0.5)
    sol = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(eta=eta), grid, op))
    fwd, _ = solve_dirichlet(op, eta, 0.0)
    diff = float(np.max(np.abs(sol.v.values - fwd.values)))
    c.check("self-adjoint", diff <= 1e-8, f"adjoint - forward {diff:.1e}")
    c.finish()


@pytest.fixture(scope="module")
def continuity_problem():
    """Shared adjoint solve for criteria 6 and 7; its cost is charged to both."""
    t0 = time.perf_counter()
    cfg = ExperimentConfig("adjoint-continuity", meshes=[1 / 512])
    grid, fld, zeta, sol = continuity_setup(cfg)
    return cfg, fld, zeta, sol, time.perf_counter() - t0


def test_criterion_6_dyadic_iteration(criterion, continuity_problem):
    c = criterion(6, "dyadic iteration: exact for A = I, bounded ratios for a Hoelder field", 600.0)
    cfg, fld, zeta, sol, setup = continuity_problem
    c.extra_time = setup
    grid = Grid2D(1 / 256)
    op = assemble(identity_field(), grid)
    psi = lambda x: np.exp(x[:, 0]) * np.cos(x[:, 1]) + x[:, 1] ** 2
    v0 = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(psi=psi), grid, op, DIRECT), DIRECT, n_tests=2)
    seq0 = dyadic_iteration(v0.v, identity_field(), None, 4, delta=1.0, cfg=DIRECT)
    Wmax = max(W.lp(2) for W in seq0.remainders[1:])
    c.check("identity", Wmax <= 10 * SOLVER_TOL and seq0.levels == 5, f"max ||W_k|| {Wmax:.1e}")
    seq = dyadic_iteration(sol.v, fld, zeta, 4, delta=1.0)
    r = np.array(seq.ratio_W)
    spread = float(r.max() / r.min())
    c.check("hoelder levels", seq.levels == 5 and not seq.truncated, f"{seq.levels} levels")
    c.check("hoelder ratios", spread <= 10, f"max/min {spread:.2f} over {np.round(r, 3).tolist()}")
    c.finish()


def test_criterion_7_continuity(criterion, continuity_problem):
    c = criterion(7, "mean oscillation of the adjoint solution decays like sigma", 600.0)
    cfg, fld, zeta, sol, setup = continuity_problem
    c.extra_time = setup
    P = cfg.params
    for i, center in enumerate(P["centers"]):
        est = continuity_estimate(sol.v, fld, zeta, center, P["radii"], P["K_levels"], cfg.p, P["delta"])
        osc, sig = est.oscillation, est.sigma
        C = float(osc @ sig / (sig @ sig))
        resid = float(np.linalg.norm(osc - C * sig) / np.linalg.norm(osc))
        c.check(f"center {i} monotone", np.all(np.diff(osc) < 0), "")
        c.check(f"center {i} decay", osc[-1] <= 0.25 * osc[0], f"c{i} decay {osc[-1] / osc[0]:.3f}")
        c.check(f"center {i} fit", resid <= 0.2, f"c{i} fit {resid:.3f}")
    c.finish()


def test_criterion_8_improve_regularity(criterion):
    c = criterion(8, "W^{2,q} ratios: stable for Dini, growing for the counterexample", 600.0)
    report = run_experiment(ExperimentConfig("improve-regularity"))
    ratios = {fam: np.array([r["ratio"] for r in report.rows if r["family"] == fam])
              for fam in ("dini", "counterexample")}
    rd, rc = ratios["dini"], ratios["counterexample"]
    variation = float(rd.max() / rd.min() - 1)
    growth = float(rc[-1] / rc[0])
    c.check("dini stable", variation <= 0.3, f"dini variation {variation:.3f}")
    c.check("counterexample growing", growth >= 2.0 and np.all(np.diff(rc) > 0), f"growth {growth:.2f}")
    c.finish()


def test_criterion_9_moduli(criterion):
    c = criterion(9, "Dini verdicts and regularization", 5.0)
    cut = 2.0 ** -200
    pw = dini_integral(ModulusSpec.power(0.5), cut)
    exact = 2 * (1 - math.sqrt(cut))
    c.check("power", pw.verdict == "convergent" and abs(pw.total - exact) <= 1e-8 * exact,
            f"total {pw.total:.12f}")
    li = dini_integral(ModulusSpec.log_inverse(1.0), cut)
    c.check("log_inverse", li.verdict == "divergent", li.verdict)
    lp = dini_integral(ModulusSpec.log_power(2.0), cut)
    c.check("log_power", lp.verdict == "convergent", lp.verdict)
    t = np.geomspace(1e-6, 1.0, 1000)
    worst = 0.0
    for spec in (ModulusSpec.power(0.5), ModulusSpec.power(2.0), ModulusSpec.log_power(2.0)):
        tt = regularize(spec)(t)
        ok = np.all(tt >= eval_modulus(spec, t) * (1 - 1e-12)) and np.all(np.diff(tt / t) <= 1e-12 * tt[:-1] / t[:-1])
        worst = max(worst, float(np.max(np.diff(tt / t) / (tt[:-1] / t[:-1]))))
        c.check(f"regularize {spec.key}", ok, "")
    c.check("ratio monotone", worst <= 1e-12, f"max relative increase {worst:.1e}")
    c.finish()

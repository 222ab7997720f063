import math

import numpy as np
import pytest

from dini_reglab.adjoint import (AdjointData, assemble_adjoint_rhs, continuity_estimate, dyadic_iteration,
                                 harmonic_replacement, interior_estimate_constant, rescale, rhs_form,
                                 select_delta, shell_norms, shell_select, smallness, solve_adjoint,
                                 trace_extension, transported_omega, two_point_continuity)
from dini_reglab.adjoint.iteration import normalization
from dini_reglab.errors import DomainError, PreconditionError
from dini_reglab.experiments import bump
from dini_reglab.fdsolver import Grid2D, GridFunction, SolverConfig, assemble, boundary_flux, solve_dirichlet
from dini_reglab.fields import ConstantField, HolderField, identity_field

DIRECT = SolverConfig("direct")


def lattice_of(grid, u):
    U = np.zeros(grid.shape)
    U[grid.interior_ij[:, 0], grid.interior_ij[:, 1]] = u
    return U


def direct_hessian_form(grid, P, u):
    """sum_i tr(P_i D^2_h u)_i h^2 with centered differences, written out on the lattice."""
    U = lattice_of(grid, u)
    i, j = grid.interior_ij.T
    h = grid.h
    uxx = (U[i + 1, j] - 2 * U[i, j] + U[i - 1, j]) / h ** 2
    uyy = (U[i, j + 1] - 2 * U[i, j] + U[i, j - 1]) / h ** 2
    uxy = (U[i + 1, j + 1] + U[i - 1, j - 1] - U[i + 1, j - 1] - U[i - 1, j + 1]) / (4 * h ** 2)
    return h * h * float(np.sum(P[:, 0, 0] * uxx + 2 * P[:, 0, 1] * uxy + P[:, 1, 1] * uyy))


def test_eta_only_rhs_is_mass_weighted():
    grid = Grid2D(1 / 16)
    op = assemble(HolderField(), grid)
    eta = np.random.default_rng(0).standard_normal(grid.n_interior)
    r = assemble_adjoint_rhs(AdjointData(eta=eta), grid, op)
    assert np.allclose(r, eta * grid.h ** 2, rtol=0, atol=1e-16)


def test_identity_phi_gives_discrete_laplacian_sum():
    grid = Grid2D(1 / 16, "square")
    op = assemble(identity_field(), grid)
    c = 2.5
    P = np.broadcast_to(c * np.eye(2), (grid.n_interior, 2, 2)).copy()
    r = assemble_adjoint_rhs(AdjointData(Phi=P), grid, op)
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.standard_normal(grid.n_interior)
        direct = c * grid.h ** 2 * float(np.sum(op.A_II @ u))
        assert r @ u == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_random_smooth_phi_matches_direct_evaluation():
    grid = Grid2D(1 / 16, "square")
    op = assemble(HolderField(), grid)
    X = grid.interior_points
    a, b, c = np.sin(2 * X[:, 0]) + 1, X[:, 0] * X[:, 1], np.cos(X[:, 1]) - X[:, 0]
    P = np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)
    r = assemble_adjoint_rhs(AdjointData(Phi=P), grid, op)
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = rng.standard_normal(grid.n_interior)
        assert r @ u == pytest.approx(direct_hessian_form(grid, P, u), rel=1e-10)


def test_rhs_form_agrees_with_assembled_vector():
    grid = Grid2D(1 / 16)
    op = assemble(HolderField(), grid)
    data = AdjointData(Phi=lambda x: np.einsum("n,ij->nij", np.cos(x[:, 0]), np.eye(2)),
                       eta=lambda x: x[:, 1], psi=lambda x: x[:, 0] ** 2)
    r = assemble_adjoint_rhs(data, grid, op, DIRECT)
    u = np.random.default_rng(3).standard_normal(grid.n_interior)
    assert rhs_form(data, grid, op, u, DIRECT) == pytest.approx(r @ u, rel=1e-10)


def test_trace_extension_of_constant_is_constant():
    for domain in ("square", "disc"):
        grid = Grid2D(1 / 16, domain)
        op = assemble(identity_field(), grid)
        V = trace_extension(op, np.ones(grid.n_boundary), DIRECT)
        assert np.allclose(V, 1.0, atol=1e-10)


def test_psi_term_approximates_boundary_flux():
    # h^2 <V_psi, L_h u> against the sum of psi (A grad u . nu) dsigma for smooth u vanishing on the boundary
    A = ConstantField([[1.2, 0.3], [0.3, 0.8]])
    gaps = []
    for h in (1 / 16, 1 / 32):
        grid = Grid2D(h, "square")
        op = assemble(A, grid)
        u = GridFunction.sample(grid, lambda x: (1 - x[..., 0] ** 2) * (1 - x[..., 1] ** 2) * np.exp(x[..., 0]))
        psi = lambda x: 1 + x[..., 0] + x[..., 1] ** 2
        form = rhs_form(AdjointData(psi=psi), grid, op, u.values, DIRECT)
        flux = boundary_flux(u, op)
        gaps.append(abs(form - float(np.sum(psi(flux.points) * flux.values * flux.dsigma))))
    assert gaps[1] < 0.6 * gaps[0] or gaps[1] < 1e-10


def test_identity_adjoint_equals_forward_solve():
    grid = Grid2D(1 / 32, "square")
    op = assemble(identity_field(), grid)
    eta = bump(5.0, 0.6)
    sol = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(eta=eta), grid, op))
    fwd, _ = solve_dirichlet(op, eta, 0.0)
    assert np.max(np.abs(sol.v.values - fwd.values)) <= 1e-8 * max(1.0, fwd.max_abs())


def test_duality_defect_small_for_variable_field():
    grid = Grid2D(1 / 32)
    op = assemble(HolderField(0.5), grid)
    data = AdjointData(Phi=lambda x: np.einsum("n,ij->nij", x[:, 0] ** 2, np.eye(2)), eta=lambda x: x[:, 1],
                       psi=lambda x: np.cos(x[:, 0]))
    sol = solve_adjoint(op, assemble_adjoint_rhs(data, grid, op))
    assert sol.duality_residual <= 1e-8
    again = solve_adjoint(op, assemble_adjoint_rhs(data, grid, op))
    assert np.max(np.abs(again.v.values - sol.v.values)) == 0.0


def test_adjoint_norm_estimate_stable_across_meshes():
    data = AdjointData(Phi=lambda x: np.einsum("n,ij->nij", np.sin(3 * x[:, 0]), np.diag([1.0, 0.5])),
                       eta=lambda x: 1 + x[:, 1], psi=lambda x: x[:, 0])
    consts = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        grid = Grid2D(h)
        op = assemble(HolderField(0.5), grid)
        sol = solve_adjoint(op, assemble_adjoint_rhs(data, grid, op), n_tests=2)
        nP = GridFunction(grid, np.linalg.norm(data.phi_values(grid), axis=(1, 2))).lp(2)
        nE = GridFunction(grid, data.eta_values(grid)).lp(2)
        s = data.psi_values(grid)
        nS = float(np.sum(s ** 2 * grid.boundary_dsigma)) ** 0.5
        consts.append(sol.norm / (nP + nE + nS))
    c = np.array(consts)
    assert c.max() / c.min() <= 1.3


def test_adjoint_data_validation():
    with pytest.raises(PreconditionError):
        AdjointData(p=1.0)
    grid = Grid2D(1 / 8)
    bad = np.zeros((grid.n_interior, 2, 2))
    bad[:, 0, 1] = 1.0
    with pytest.raises(DomainError):
        AdjointData(Phi=bad).phi_values(grid)
    with pytest.raises(DomainError):
        AdjointData(eta=np.zeros(3)).eta_values(grid)
    assert AdjointData(p=3.0).p_conj == pytest.approx(1.5)


def test_shell_select_constant_function():
    grid = Grid2D(1 / 64)
    v = GridFunction(grid, np.ones(grid.n_interior))
    ch = shell_select(v, 2.0)
    assert ch.t == pytest.approx(0.75)
    assert ch.shell_norm == pytest.approx(math.sqrt(2 * math.pi * 0.75), rel=1e-12)
    assert ch.ratio == pytest.approx(math.sqrt(2 * math.pi * 0.75 / (grid.n_interior * grid.h ** 2)), rel=1e-12)
    assert ch.ratio <= ch.bound


def test_shell_select_compact_support_and_brute_force():
    grid = Grid2D(1 / 64)
    X = grid.interior_points
    v = GridFunction(grid, np.where(np.hypot(*X.T) < 0.5, 1.0, 0.0))
    assert shell_select(v, 2.0).shell_norm == 0.0
    rng = np.random.default_rng(4)
    w = GridFunction(grid, rng.standard_normal(grid.n_interior))
    ch = shell_select(w, 1.5)
    radii = 0.75 + grid.h * np.arange(0, 100)
    radii = radii[radii <= 1 - 4 * grid.h + 1e-12]
    brute = shell_norms(w, 1.5, radii)
    assert ch.shell_norm == pytest.approx(brute.min(), rel=1e-12)
    assert ch.shell_norm <= ch.bound * ch.ball_norm


def test_shell_select_empty_window():
    with pytest.raises(DomainError):
        shell_select(GridFunction(Grid2D(1 / 8), np.zeros(Grid2D(1 / 8).n_interior)), 2.0, window=(0.99, 1.0))


def test_harmonic_replacement_reproduces_discrete_harmonic():
    grid = Grid2D(1 / 64)
    X = grid.interior_points
    v = GridFunction(grid, X[:, 0] ** 2 - X[:, 1] ** 2 + 3 * X[:, 0] * X[:, 1])
    hp = harmonic_replacement(v, 0.8)
    assert np.max(np.abs(hp.values - v.values[hp.ball])) < 1e-12


def test_harmonic_replacement_of_radius_squared():
    for h in (1 / 32, 1 / 64):
        grid = Grid2D(h)
        X = grid.interior_points
        v = GridFunction(grid, np.sum(X ** 2, axis=1))
        hp = harmonic_replacement(v, 0.75)
        # staircase ring sits within one cell of the circle
        assert np.max(np.abs(hp.values - 0.75 ** 2)) <= 2 * 0.75 * h * 1.5 + h * h
        # closed form of ||v - t^2||_{L^2(B_t)}^2 = pi t^6 / 3
        diff = float(np.sum((v.values[hp.ball] - hp.values) ** 2) * h * h) ** 0.5
        assert diff == pytest.approx(math.sqrt(math.pi * 0.75 ** 6 / 3), rel=0.1)


def test_rescale_identity_delta():
    grid = Grid2D(1 / 32)
    v = GridFunction(grid, np.cos(grid.interior_points[:, 0]))
    st = rescale(v, None, 1.0, 2.0, M=0.5)
    assert np.array_equal(st.v_delta.values, st.delta_bar * v.values)
    assert st.zeta_delta.max_abs() == 0.0
    assert st.invariants["v_ok"] and st.invariants["zeta_ok"]
    omega, _ = transported_omega(None, normalization(None))
    assert st.delta_bar == pytest.approx(omega(1.0) / (0.5 * (1 + v.lp(2))), rel=1e-14)


def test_rescale_half_delta_invariants():
    grid = Grid2D(1 / 32)
    v = GridFunction(grid, 1 + grid.interior_points[:, 0])
    st = rescale(v, bump(3.0, 0.8), 0.5, 2.0, M=0.5)
    assert st.invariants["v_ok"] and st.invariants["zeta_ok"]
    with pytest.raises(DomainError):
        rescale(v, None, 1.5, 2.0)


def test_interior_constant_closed_form():
    assert interior_estimate_constant(2.0) == pytest.approx(132 / math.sqrt(math.pi), rel=1e-14)


def test_select_delta_is_the_admissible_boundary():
    fld = HolderField(0.5, 0.5)
    omega, _ = transported_omega(fld.modulus, normalization(fld, unit=0.25))
    d = select_delta(omega, 0.5, 2.0)
    assert smallness(omega, d, 0.5, 2.0) <= 1
    assert smallness(omega, d * 1.001, 0.5, 2.0) > 1


def test_identity_iteration_has_no_remainder():
    # zero source and A = I: v is discrete harmonic, so h_0 captures everything
    grid = Grid2D(1 / 128)
    op = assemble(identity_field(), grid)
    psi = lambda x: np.exp(x[:, 0]) * np.cos(x[:, 1]) + x[:, 1] ** 2
    sol = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(psi=psi), grid, op, DIRECT), DIRECT, n_tests=2)
    seq = dyadic_iteration(sol.v, identity_field(), None, 2, delta=1.0, cfg=DIRECT)
    assert seq.levels == 3 and not seq.truncated
    assert seq.remainders[0].lp(2) > 0.1
    assert all(W.lp(2) <= 1e-11 for W in seq.remainders[1:])
    assert all(g == 0 for g in seq.G_norms)


def test_identity_iteration_with_source_keeps_remainders():
    grid = Grid2D(1 / 64)
    op = assemble(identity_field(), grid)
    zeta = bump(10.0, 0.5)
    sol = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(eta=zeta), grid, op), DIRECT, n_tests=2)
    seq = dyadic_iteration(sol.v, identity_field(), zeta, 1, delta=1.0, cfg=DIRECT)
    assert seq.remainders[1].lp(2) > 1e-3


def holder_problem(h):
    centers = [(0.0, 0.0), (0.2, 0.1)]
    fld = HolderField(0.5, 0.5, kinks=centers)
    zeta = bump(10.0, 0.5)
    grid = Grid2D(h)
    op = assemble(fld, grid)
    sol = solve_adjoint(op, assemble_adjoint_rhs(AdjointData(eta=zeta), grid, op), n_tests=2)
    return fld, zeta, sol


def test_continuity_estimate_holder_field():
    fld, zeta, sol = holder_problem(1 / 64)
    est = continuity_estimate(sol.v, fld, zeta, (0.0, 0.0), [0.25, 0.125, 0.0625], K_levels=4)
    assert est.monotone
    assert est.C > 0 and np.all(np.isfinite(est.oscillation))
    assert est.decay < 1


def test_two_point_continuity_reports_constant():
    fld, zeta, sol = holder_problem(1 / 64)
    C, rows = two_point_continuity(sol.v, fld, zeta, [((0.0, 0.0), (0.2, 0.1))], K_levels=2)
    assert np.isfinite(C) and C >= 0 and len(rows) == 1

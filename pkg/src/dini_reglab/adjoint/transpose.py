"""Adjoint solutions by discrete transposition.

An adjoint solution v of L* v = div^2 Phi + eta with boundary datum psi is
defined by testing against forward solutions.  Discretely, for every grid
function u vanishing on the boundary,

    sum_i v_i (L_h u)_i h^2 = sum_i tr(Phi_i D_h^2 u)_i h^2 + sum_i eta_i u_i h^2
                              + sum_b psi_b (A grad_h u . nu)_b dsigma_b.

The right side is a linear form <r, u>; transposing the Hessian stencil
gives the Phi part of r, and v solves the transposed system h^2 A_II^T v = r.

The boundary term uses a discrete Green flux.  With V_psi the solution of a
conservative discretization of L* V = 0, V = psi, the pairing is
sum_b psi_b (A grad_h u . nu)_b dsigma_b := h^2 <V_psi, L_h u>.  This is a
consistent flux functional, and the transposed solve then reproduces the
trace psi exactly; transposing a local one-sided flux leaves an O(1) layer
next to a curved boundary instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, PreconditionError
from ..fdsolver.grid import Grid2D, GridFunction
from ..fdsolver.krylov import SolverConfig, solve_linear
from ..fdsolver.stencil import StencilOperator, assemble
from ..fields import MatrixFunctionField


@dataclass
class AdjointData:
    """Sources of an adjoint problem on a grid.

    Phi: (N, 2, 2) symmetric per node, or a callable of points (or None);
    eta: (N,) or callable (or None); psi: (Nb,) or callable (or None).
    """

    Phi: object = None
    eta: object = None
    psi: object = None
    p: float = 2.0

    def __post_init__(self):
        if not 1 < self.p < np.inf:
            raise PreconditionError("p must lie in (1, inf)")

    @property
    def p_conj(self):
        return self.p / (self.p - 1)

    def phi_values(self, grid):
        if self.Phi is None:
            return None
        P = self.Phi(grid.interior_points) if callable(self.Phi) else self.Phi
        P = np.asarray(P, dtype=float)
        if P.shape != (grid.n_interior, 2, 2):
            raise DomainError("Phi must have shape (n_interior, 2, 2)")
        if not np.allclose(P, np.swapaxes(P, 1, 2), atol=1e-12 * (1 + np.abs(P).max())):
            raise DomainError("Phi must be symmetric at every node")
        return P

    def eta_values(self, grid):
        if self.eta is None:
            return None
        e = self.eta(grid.interior_points) if callable(self.eta) else self.eta
        e = np.asarray(e, dtype=float)
        if e.shape != (grid.n_interior,):
            raise DomainError("eta must have one value per interior node")
        return e

    def psi_values(self, grid):
        if self.psi is None:
            return None
        s = self.psi(grid.boundary_points) if callable(self.psi) else self.psi
        s = np.asarray(s, dtype=float)
        if s.shape != (grid.n_boundary,):
            raise DomainError("psi must have one value per boundary point")
        return s


def trace_extension(op: StencilOperator, psi, cfg: SolverConfig | None = None):
    """Interior values of the discrete L*-harmonic function with boundary values psi."""
    D, boundary = op.conservative_adjoint()
    v, _ = solve_linear(D, -boundary(psi), cfg)
    return v


def assemble_adjoint_rhs(data: AdjointData, grid: Grid2D, op: StencilOperator,
                         cfg: SolverConfig | None = None):
    """Vector r with <r, u> equal to the right side of the discrete identity."""
    if op.grid is not grid:
        raise DomainError("operator and data live on different grids")
    h2 = grid.h ** 2
    r = np.zeros(grid.n_interior)
    P = data.phi_values(grid)
    if P is not None:
        H = assemble(MatrixFunctionField(lambda x, P=P: P, name="Phi"), grid, check=False).A_II
        r += h2 * np.asarray(H.sum(axis=0)).ravel()
    e = data.eta_values(grid)
    if e is not None:
        r += h2 * e
    s = data.psi_values(grid)
    if s is not None:
        r += h2 * (op.A_II.T @ trace_extension(op, s, cfg))
    return r


def rhs_form(data: AdjointData, grid: Grid2D, op: StencilOperator, u,
             cfg: SolverConfig | None = None):
    """Direct evaluation of the right side for interior values u (zero boundary)."""
    h2 = grid.h ** 2
    total = 0.0
    P = data.phi_values(grid)
    if P is not None:
        H = assemble(MatrixFunctionField(lambda x, P=P: P, name="Phi"), grid, check=False)
        total += h2 * float(np.sum(H.A_II @ u))
    e = data.eta_values(grid)
    if e is not None:
        total += h2 * float(e @ u)
    s = data.psi_values(grid)
    if s is not None:
        total += h2 * float(trace_extension(op, s, cfg) @ (op.A_II @ u))
    return total


@dataclass
class AdjointSolution:
    v: GridFunction
    duality_residual: float
    norm: float
    p: float
    stats: object = None
    extras: dict = field(default_factory=dict)


def duality_family(grid: Grid2D, n=20, seed=0):
    """Seeded random interior vectors (zero boundary) for duality checks."""
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(grid.n_interior) for _ in range(n)]


def duality_defect(op, v, rhs, family):
    """max over u of |<v, L_h u> h^2 - <r, u>| / (|<r, u>| + |<v, L_h u>| h^2)."""
    h2 = op.grid.h ** 2
    worst = 0.0
    for u in family:
        lhs = h2 * float(v @ (op.A_II @ u))
        rr = float(rhs @ u)
        scale = abs(lhs) + abs(rr)
        if scale > 0:
            worst = max(worst, abs(lhs - rr) / scale)
    return worst


def solve_adjoint(op: StencilOperator, rhs, cfg: SolverConfig | None = None, p=2.0,
                  n_tests=20, seed=0, x0=None) -> AdjointSolution:
    """Solve h^2 A_II^T v = rhs and report the duality defect on a random family."""
    grid = op.grid
    rhs = np.asarray(rhs, dtype=float)
    AT = op.A_II.T.tocsr()
    v, stats = solve_linear(AT, rhs / grid.h ** 2, cfg, x0)
    defect = duality_defect(op, v, rhs, duality_family(grid, n_tests, seed)) if n_tests else 0.0
    vf = GridFunction(grid, v)
    return AdjointSolution(vf, defect, vf.lp(p), p, stats)

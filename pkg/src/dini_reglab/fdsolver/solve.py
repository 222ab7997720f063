"""Dirichlet solves, boundary fluxes and empirical Calderon-Zygmund constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from ..errors import DomainError
from .grid import Grid2D, GridFunction
from .krylov import SolverConfig, SolveStats, solve_linear
from .stencil import StencilOperator, assemble


def _as_interior(grid, f):
    if isinstance(f, GridFunction):
        if f.grid is not grid:
            raise DomainError("right-hand side lives on a different grid")
        return f.values
    if callable(f):
        return np.asarray(f(grid.interior_points), dtype=float)
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return np.full(grid.n_interior, float(f))
    if f.shape != (grid.n_interior,):
        raise DomainError("right-hand side has the wrong length")
    return f


def _as_boundary(grid, g):
    if g is None:
        return np.zeros(grid.n_boundary)
    if callable(g):
        return np.asarray(g(grid.boundary_points), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        return np.full(grid.n_boundary, float(g))
    if g.shape != (grid.n_boundary,):
        raise DomainError("boundary data has the wrong length")
    return g


def solve_dirichlet(op: StencilOperator, f, g=None, cfg: SolverConfig | None = None, x0=None):
    """Solve L_h u = f in the interior with u = g at the boundary points.

    ``f`` and ``g`` may be arrays, scalars, callables of points or grid
    functions.  The tolerance is relative to the norm of the interior system's
    right-hand side f - B g.  Raises NonConvergenceError (with the best
    iterate) when ``cfg.max_iter`` is exhausted.
    """
    grid = op.grid
    fv = _as_interior(grid, f)
    gv = _as_boundary(grid, g)
    rhs = op.boundary_rhs(fv, gv)
    u, stats = solve_linear(op.A_II, rhs, cfg, x0)
    return GridFunction(grid, u, gv), stats


# ---------------------------------------------------------------------------
# fluxes


@dataclass
class FluxOperator:
    """Gradient at the boundary points as linear maps of (interior, boundary) values."""

    Gx_u: sp.csr_matrix
    Gx_g: sp.csr_matrix
    Gy_u: sp.csr_matrix
    Gy_g: sp.csr_matrix
    conormal: np.ndarray  # A nu at each boundary point

    def gradient(self, u, g):
        return np.column_stack([self.Gx_u @ u + self.Gx_g @ g, self.Gy_u @ u + self.Gy_g @ g])

    def flux(self, u, g):
        G = self.gradient(u, g)
        return np.sum(self.conormal * G, axis=1)

    def matrices(self):
        """(F_u, F_g) with flux = F_u u_I + F_g g."""
        cx = sp.diags(self.conormal[:, 0])
        cy = sp.diags(self.conormal[:, 1])
        return (cx @ self.Gx_u + cy @ self.Gy_u).tocsr(), (cx @ self.Gx_g + cy @ self.Gy_g).tocsr()


def flux_operator(grid: Grid2D, field=None, radius=2.5) -> FluxOperator:
    """Quadratic least-squares gradient at every boundary point.

    The fit is pinned to the boundary value and uses the interior nodes and
    boundary points within ``radius * h``; it reproduces gradients of
    quadratics exactly and is second order for smooth u.
    """
    h = grid.h
    tree = cKDTree(grid.boundary_points)
    k = int(np.ceil(radius)) + 1
    rx, cx, vx, ry, cy_, vy = [], [], [], [], [], []
    gx_r, gx_c, gx_v, gy_r, gy_c, gy_v = [], [], [], [], [], []
    for b, xb in enumerate(grid.boundary_points):
        ci, cj = np.round(xb / h).astype(int) + grid.N
        pts, refs = [], []
        for di in range(-k, k + 1):
            for dj in range(-k, k + 1):
                ni = grid.node_index[ci + di, cj + dj]
                if ni < 0:
                    continue
                d = (grid.interior_points[ni] - xb) / h
                if d @ d <= radius * radius:
                    pts.append(d), refs.append((0, ni))
        for q in sorted(tree.query_ball_point(xb, radius * h)):
            if q != b:
                pts.append((grid.boundary_points[q] - xb) / h), refs.append((1, q))
        d = np.array(pts)
        V = np.column_stack([d[:, 0], d[:, 1], d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2])
        P = np.linalg.pinv(V)[:2] / h
        for (isb, idx), wx, wy in zip(refs, P[0], P[1]):
            if isb:
                gx_r.append(b), gx_c.append(idx), gx_v.append(wx)
                gy_r.append(b), gy_c.append(idx), gy_v.append(wy)
            else:
                rx.append(b), cx.append(idx), vx.append(wx)
                ry.append(b), cy_.append(idx), vy.append(wy)
        # the pinned value enters with minus the row sum
        gx_r.append(b), gx_c.append(b), gx_v.append(-P[0].sum())
        gy_r.append(b), gy_c.append(b), gy_v.append(-P[1].sum())
    N, Nb = grid.n_interior, grid.n_boundary

    def mk(r, c, v, ncol):
        return sp.csr_matrix((v, (r, c)), shape=(Nb, ncol))

    if field is None:
        conormal = grid.boundary_normals.copy()
    else:
        A = np.asarray(field(grid.boundary_points), dtype=float).reshape(Nb, 2, 2)
        conormal = np.einsum("bij,bj->bi", A, grid.boundary_normals)
    return FluxOperator(mk(rx, cx, vx, N), mk(gx_r, gx_c, gx_v, Nb),
                        mk(ry, cy_, vy, N), mk(gy_r, gy_c, gy_v, Nb), conormal)


@dataclass
class BoundaryFlux:
    points: np.ndarray
    normals: np.ndarray
    values: np.ndarray
    dsigma: np.ndarray

    def integral(self):
        return float(np.sum(self.values * self.dsigma))


def boundary_flux(u_h: GridFunction, op: StencilOperator) -> BoundaryFlux:
    """A grad u . nu at every boundary point, with arc-length weights."""
    grid = op.grid
    if u_h.boundary is None:
        raise DomainError("boundary flux needs boundary values")
    fo = op.flux_operator()
    return BoundaryFlux(grid.boundary_points, grid.boundary_normals,
                        fo.flux(u_h.values, u_h.boundary), grid.boundary_dsigma)


# ---------------------------------------------------------------------------
# empirical CZ constant


def random_rhs(seed=0, n_modes=6):
    """A seeded smooth random function (sum of plane waves), grid independent."""
    rng = np.random.default_rng(seed)
    k = rng.integers(-4, 5, size=(n_modes, 2)) * np.pi / 2
    a = rng.standard_normal(n_modes)
    ph = rng.uniform(0, 2 * np.pi, n_modes)

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.sum(a * np.cos(x @ k.T + ph), axis=-1)

    return f


def empirical_cz_constant(field, p, meshes, n_samples=4, seed=0, domain="disc",
                          cfg: SolverConfig | None = None, rhs=None, exclude=None):
    """C_h = ||u_h||_{W^{2,p},h} / ||f||_{l^p,h} for Dirichlet solves with g = 0.

    The norm of u_h is taken over nodes at least two cells inside.  ``rhs``
    replaces the random ensemble with a single callable.  Returns one row per
    mesh with the maximum and mean constant over the ensemble.
    """
    from ..quadrature import discrete_w2p

    fs = [rhs] if rhs is not None else [random_rhs(seed + s) for s in range(n_samples)]
    rows = []
    for h in meshes:
        grid = Grid2D(h, domain)
        op = assemble(field, grid)
        consts = []
        for f in fs:
            fv = _as_interior(grid, f)
            u, _ = solve_dirichlet(op, fv, 0.0, cfg)
            num = discrete_w2p(u, p, exclude=exclude)
            den = GridFunction(grid, fv).lp(p)
            consts.append(num / den)
        rows.append({"h": h, "C_max": float(max(consts)), "C_mean": float(np.mean(consts)),
                     "n_samples": len(fs)})
    return rows


__all__ = ["solve_dirichlet", "boundary_flux", "flux_operator", "empirical_cz_constant",
           "FluxOperator", "BoundaryFlux", "SolveStats", "random_rhs"]

"""Shell selection and harmonic replacement on a unit-disc grid.

The replacement of w on B_t is the discrete harmonic function (5-point
Laplacian) on the staircase ball {|y| < t} whose values on the ring of
lattice neighbours are taken from w.  Ring values are read directly, so a
w that is already 5-point harmonic is reproduced exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DomainError
from ..fdsolver.grid import ARMS, Grid2D, GridFunction, bilinear

# Harmonic-replacement constant used in the normalization delta_bar.  Measured
# once by calibrate_M on holder:0.5 (kappa 0.5 and 0.25) and holder:0.25 at
# h = 1/32, 1/64, 1/128 (max ratio 0.487) and frozen here.
M_DEFAULT = 0.5


def shell_norms(v: GridFunction, p, radii, n_angles=None):
    """Interpolated l^p norms of v on the circles |y| = t (trapezoid in angle)."""
    U = v.lattice()
    out = []
    for t in np.atleast_1d(radii):
        m = n_angles or max(64, int(math.ceil(8 * math.pi * t / v.grid.h)))
        a = 2 * np.pi * np.arange(m) / m
        pts = t * np.column_stack([np.cos(a), np.sin(a)])
        vals = bilinear(v.grid, U, pts)
        out.append(float(np.sum(np.abs(vals) ** p) * 2 * np.pi * t / m) ** (1 / p))
    return np.array(out)


@dataclass
class ShellChoice:
    t: float
    shell_norm: float
    ball_norm: float
    bound: float  # 4^{1/p}: the averaging bound min_t ||w||_{dB_t} <= 4^{1/p} ||w||_{B_1}
    radii: np.ndarray
    norms: np.ndarray

    @property
    def ratio(self):
        return self.shell_norm / self.ball_norm if self.ball_norm > 0 else 0.0


def shell_select(v: GridFunction, p, window=(0.75, 1.0), margin=4):
    """Radius in ``window`` minimizing the interpolated shell norm of v.

    Candidates are spaced by h and stay ``margin`` cells inside the grid
    radius.  Ties go to the smallest radius.
    """
    g = v.grid
    lo, hi = window
    hi = min(hi, g.radius - margin * g.h)
    if hi < lo:
        raise DomainError("radius window contains no admissible shell")
    radii = lo + g.h * np.arange(int(math.floor((hi - lo) / g.h + 1e-9)) + 1)
    norms = shell_norms(v, p, radii)
    k = int(np.argmin(norms))  # first minimum: smallest t on ties
    return ShellChoice(float(radii[k]), float(norms[k]), v.lp(p), 4.0 ** (1 / p), radii, norms)


@dataclass
class HarmonicPiece:
    """Discrete harmonic function on a staircase ball of a grid."""

    grid: Grid2D
    t: float
    ball: np.ndarray  # interior-node rows with |y| < t
    ring: np.ndarray  # interior-node rows forming the Dirichlet ring
    values: np.ndarray  # on ball nodes
    ring_values: np.ndarray
    residual: float = 0.0
    extras: dict = field(default_factory=dict)

    def lattice(self):
        U = np.full(self.grid.shape, np.nan)
        ij = self.grid.interior_ij
        U[ij[self.ball, 0], ij[self.ball, 1]] = self.values
        U[ij[self.ring, 0], ij[self.ring, 1]] = self.ring_values
        return U

    def __call__(self, pts):
        return bilinear(self.grid, self.lattice(), pts)

    def on_grid(self, fill=0.0):
        """Values on all interior nodes of the grid (``fill`` off the ball)."""
        out = np.full(self.grid.n_interior, fill)
        out[self.ball] = self.values
        return out

    def lp(self, p, radius=None):
        """h^2-weighted l^p norm over ball nodes with |y| < radius."""
        r = self.t if radius is None else radius
        pts = self.grid.interior_points[self.ball]
        sel = np.hypot(pts[:, 0], pts[:, 1]) < r
        return float(np.sum(np.abs(self.values[sel]) ** p) * self.grid.h ** 2) ** (1 / p)

    def sup_and_gradient(self, radius=0.5):
        """max |h| and max |grad h| (centered differences) over |y| < radius."""
        g = self.grid
        U = self.lattice()
        ij = g.interior_ij[self.ball]
        pts = g.interior_points[self.ball]
        sel = np.hypot(pts[:, 0], pts[:, 1]) < radius
        i, j = ij[sel].T
        gx = (U[i + 1, j] - U[i - 1, j]) / (2 * g.h)
        gy = (U[i, j + 1] - U[i, j - 1]) / (2 * g.h)
        return float(np.max(np.abs(U[i, j]))), float(np.max(np.hypot(gx, gy)))


def staircase_ball(grid: Grid2D, t):
    """(ball rows, ring rows) for the staircase ball |y| < t."""
    pts = grid.interior_points
    inside = np.hypot(pts[:, 0], pts[:, 1]) < t
    ball = np.nonzero(inside)[0]
    ij = grid.interior_ij[ball]
    ring = set()
    for dx, dy in ARMS:
        nb = grid.node_index[ij[:, 0] + dx, ij[:, 1] + dy]
        if np.any(nb < 0):
            raise DomainError("staircase ball touches the grid boundary")
        ring.update(nb[~inside[nb]].tolist())
    return ball, np.array(sorted(ring), dtype=np.int64)


def harmonic_replacement(v: GridFunction, t) -> HarmonicPiece:
    """5-point harmonic function on {|y| < t} with ring values taken from v."""
    g = v.grid
    ball, ring = staircase_ball(g, t)
    local = np.full(g.n_interior, -1, dtype=np.int64)
    local[ball] = np.arange(len(ball))
    ij = g.interior_ij[ball]
    rows, cols, vals = [np.arange(len(ball))], [np.arange(len(ball))], [np.full(len(ball), 4.0)]
    rhs = np.zeros(len(ball))
    for dx, dy in ARMS:
        nb = g.node_index[ij[:, 0] + dx, ij[:, 1] + dy]
        inner = local[nb] >= 0
        rows.append(np.nonzero(inner)[0]), cols.append(local[nb[inner]]), vals.append(-np.ones(inner.sum()))
        np.add.at(rhs, np.nonzero(~inner)[0], v.values[nb[~inner]])
    L = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(ball), len(ball)))
    hv = spla.splu(L).solve(rhs)
    res = float(np.max(np.abs(L @ hv - rhs))) if len(ball) else 0.0
    return HarmonicPiece(g, float(t), ball, ring, hv, v.values[ring].copy(), res)


def interior_estimate_constant(p, n=2):
    """C(n, p) with ||h||_inf(B_1/2) + ||grad h||_inf(B_1/2) <= C ||h||_{L^p(B_3/4)}.

    Mean value property on B_{1/4}(x) for |h(x)|, and the gradient bound
    |grad h(x)| <= (n / rho) sup_{B_rho(x)} |h| with rho = 1/8 combined with the
    mean value property on balls of radius 1/8.
    """
    def vol(r):
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r ** n

    return vol(0.25) ** (-1 / p) + (n / 0.125) * vol(0.125) ** (-1 / p)


def calibrate_M(fields, meshes=(1 / 32, 1 / 64, 1 / 128), p=2.0, seed=0, cfg=None):
    """Measure the harmonic-replacement constant on a calibration family.

    For each field (with A(0) = I) and mesh, an adjoint problem with seeded
    smooth Phi, eta and psi is solved on the unit disc, the shell is selected
    and w is replaced.  Returns (M, rows) with M the largest of
    ||h||_{B_3/4} / ||w||_{B_1} and
    ||w - h||_{B_3/4} / (||Phi|| + ||A - I||_inf ||w|| + ||eta||_inf).
    """
    from ..fdsolver.solve import random_rhs
    from ..fdsolver.stencil import assemble
    from .transpose import AdjointData, assemble_adjoint_rhs, solve_adjoint

    rows = []
    for fi, fld in enumerate(fields):
        for h in meshes:
            g = Grid2D(h)
            op = assemble(fld, g)
            s = seed + 7 * fi
            f1, f2, f3 = random_rhs(s), random_rhs(s + 1), random_rhs(s + 2)
            eps = 0.1

            def Phi(x, f1=f1, f2=f2, f3=f3):
                P = np.empty(x.shape[:-1] + (2, 2))
                P[..., 0, 0], P[..., 1, 1] = eps * f1(x), eps * f2(x)
                P[..., 0, 1] = P[..., 1, 0] = eps * 0.5 * f3(x)
                return P

            data = AdjointData(Phi=Phi, eta=lambda x, f=random_rhs(s + 3): eps * f(x),
                               psi=random_rhs(s + 4), p=p)
            sol = solve_adjoint(op, assemble_adjoint_rhs(data, g, op, cfg), cfg, p=p, n_tests=0)
            w = sol.v
            shell = shell_select(w, p)
            hp = harmonic_replacement(w, shell.t)
            sel = np.hypot(*g.interior_points[hp.ball].T) < 0.75
            diff = (w.values[hp.ball] - hp.values)[sel]
            d_norm = float(np.sum(np.abs(diff) ** p) * h * h) ** (1 / p)
            Pv = data.phi_values(g)
            phi_norm = float(np.sum(np.linalg.norm(Pv, axis=(1, 2)) ** p) * h * h) ** (1 / p)
            AmI = float(np.max(np.linalg.norm(op.coefficients - np.eye(2), ord=2, axis=(1, 2))))
            eta_inf = float(np.max(np.abs(data.eta_values(g))))
            rows.append({"field": fld.name, "h": h, "t": shell.t,
                         "ratio_h": hp.lp(p, 0.75) / w.lp(p),
                         "ratio_diff": d_norm / (phi_norm + AmI * w.lp(p) + eta_inf)})
    M = max(max(r["ratio_h"], r["ratio_diff"]) for r in rows)
    return M, rows

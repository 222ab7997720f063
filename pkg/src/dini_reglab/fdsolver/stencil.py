"""Nine-point discretization of tr(A D^2 u) on a Grid2D.

Rows act on interior unknowns (matrix ``A_II``) and on boundary values
(matrix ``B``), so that L_h u = A_II u_I + B g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from ..errors import EllipticityError
from .grid import Grid2D, GridFunction

MIXED_NONE, MIXED_FULL, MIXED_PAIR, MIXED_QUADRANT, MIXED_FIT = range(5)


@dataclass
class StencilOperator:
    grid: Grid2D
    A_II: sp.csr_matrix
    B: sp.csr_matrix
    coefficients: np.ndarray
    field_name: str = ""
    mixed_kind: np.ndarray = field(default=None, repr=False)
    coeff_field: object = field(default=None, repr=False)
    _flux: object = field(default=None, repr=False, compare=False)
    _conservative: object = field(default=None, repr=False, compare=False)

    def flux_operator(self):
        """Cached boundary-gradient operator (see solve.flux_operator)."""
        if self._flux is None:
            from .solve import flux_operator

            self._flux = flux_operator(self.grid, self.coeff_field)
        return self._flux

    def conservative_adjoint(self):
        """Cached (D_II, boundary) from assemble_conservative_adjoint."""
        if self._conservative is None:
            if self.coeff_field is None:
                raise ValueError("operator was assembled without a coefficient field")
            self._conservative = assemble_conservative_adjoint(self.coeff_field, self.grid)
        return self._conservative

    def apply(self, u, g=None):
        """L_h u for a GridFunction (uses its boundary values) or a vector plus g."""
        if isinstance(u, GridFunction):
            g = u.boundary if g is None else g
            u = u.values
        out = self.A_II @ u
        if g is not None:
            out = out + self.B @ np.asarray(g, dtype=float)
        return out

    def boundary_rhs(self, f, g):
        """Right-hand side f - B g for the interior unknowns."""
        return np.asarray(f, dtype=float) - self.B @ np.asarray(g, dtype=float)

    @property
    def shape(self):
        return self.A_II.shape


class _Entries:
    def __init__(self, grid):
        self.grid = grid
        self.rI, self.cI, self.vI = [], [], []
        self.rB, self.cB, self.vB = [], [], []

    def add_lattice(self, rows, li, lj, w):
        """Add weight w at lattice node (li, lj) for the given rows."""
        g = self.grid
        ni = g.node_index[li, lj]
        nb = g.lattice_boundary[li, lj]
        m = ni >= 0
        self.rI.append(rows[m]), self.cI.append(ni[m]), self.vI.append(w[m])
        m = (ni < 0) & (nb >= 0)
        self.rB.append(rows[m]), self.cB.append(nb[m]), self.vB.append(w[m])
        if np.any((ni < 0) & (nb < 0)):
            raise AssertionError("stencil references a node without a value")

    def add_arm(self, rows, a, w):
        g = self.grid
        ref, isb = g.arm_ref[rows, a], g.arm_is_boundary[rows, a]
        self.rI.append(rows[~isb]), self.cI.append(ref[~isb]), self.vI.append(w[~isb])
        self.rB.append(rows[isb]), self.cB.append(ref[isb]), self.vB.append(w[isb])

    def add_diag(self, rows, w):
        self.rI.append(rows), self.cI.append(rows), self.vI.append(w)

    def build(self):
        g = self.grid
        N, Nb = g.n_interior, g.n_boundary

        def mk(r, c, v, ncol):
            r = np.concatenate(r) if r else np.zeros(0, int)
            c = np.concatenate(c) if c else np.zeros(0, int)
            v = np.concatenate(v) if v else np.zeros(0)
            M = sp.coo_matrix((v, (r, c)), shape=(N, ncol)).tocsr()
            M.sum_duplicates()
            M.sort_indices()
            return M

        return mk(self.rI, self.cI, self.vI, N), mk(self.rB, self.cB, self.vB, Nb)


def _check_coefficients(A, name):
    if not np.allclose(A, np.swapaxes(A, -1, -2), atol=1e-12):
        raise EllipticityError(f"{name}: coefficient matrix not symmetric")
    lo = np.linalg.eigvalsh(A).min() if len(A) else 1.0
    if lo <= 0:
        raise EllipticityError(f"{name}: lambda_min = {lo} <= 0 at a grid node")


def assemble(field, grid: Grid2D, check=True) -> StencilOperator:
    """Discretize tr(A D^2 u).

    Pure second derivatives use Shortley-Weller arms (exact on quadratics).
    The mixed derivative uses, in order of preference: the centered 4-corner
    stencil; two opposite quadrant stencils averaged (second order); a single
    quadrant stencil (first order); a local quadratic least-squares fit.
    ``check=False`` skips the ellipticity test, for general matrix data.
    """
    h = grid.h
    X = grid.interior_points
    A = np.asarray(field(X), dtype=float).reshape(len(X), 2, 2)
    name = getattr(field, "name", "field")
    if check:
        _check_coefficients(A, name)
    a11, a12, a22 = A[:, 0, 0], 0.5 * (A[:, 0, 1] + A[:, 1, 0]), A[:, 1, 1]
    E = _Entries(grid)
    rows = np.arange(grid.n_interior)

    for coef, (ap, am) in ((a11, (0, 1)), (a22, (2, 3))):
        tp, tm = grid.arm_len[:, ap], grid.arm_len[:, am]
        s = tp + tm
        E.add_arm(rows, ap, coef * 2 / (h * h * tp * s))
        E.add_arm(rows, am, coef * 2 / (h * h * tm * s))
        E.add_diag(rows, -coef * 2 / (h * h * tp * tm))

    kind = np.full(grid.n_interior, MIXED_NONE, dtype=np.int8)
    status = grid.lattice_status()
    ii, jj = grid.interior_ij.T
    need = a12 != 0
    avail = {(dx, dy): status[ii + dx, jj + dy] > 0
             for dx in (-1, 0, 1) for dy in (-1, 0, 1)}

    def quad_ok(sx, sy):
        return avail[(sx, 0)] & avail[(0, sy)] & avail[(sx, sy)]

    def add_quadrant(r, sx, sy, w):
        # sx*sy (u_{sx,sy} - u_{sx,0} - u_{0,sy} + u_0) / h^2, scaled by w
        c = w * sx * sy / (h * h)
        E.add_lattice(r, ii[r] + sx, jj[r] + sy, c)
        E.add_lattice(r, ii[r] + sx, jj[r], -c)
        E.add_lattice(r, ii[r], jj[r] + sy, -c)
        E.add_diag(r, c)

    full = need & avail[(1, 1)] & avail[(-1, -1)] & avail[(1, -1)] & avail[(-1, 1)]
    r = rows[full]
    c = a12[r] / (2 * h * h)
    for sx, sy in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        E.add_lattice(r, ii[r] + sx, jj[r] + sy, sx * sy * c)
    kind[r] = MIXED_FULL
    left = need & ~full

    for q1, q2 in (((1, 1), (-1, -1)), ((1, -1), (-1, 1))):
        m = left & quad_ok(*q1) & quad_ok(*q2)
        r = rows[m]
        add_quadrant(r, *q1, a12[r])
        add_quadrant(r, *q2, a12[r])
        kind[r] = MIXED_PAIR
        left &= ~m

    for q in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        m = left & quad_ok(*q)
        r = rows[m]
        add_quadrant(r, *q, 2 * a12[r])
        kind[r] = MIXED_QUADRANT
        left &= ~m

    if np.any(left):
        _fit_mixed(grid, E, rows[left], a12, status)
        kind[left] = MIXED_FIT

    A_II, B = E.build()
    return StencilOperator(grid, A_II, B, A, name, kind, field)


def _fit_mixed(grid, E, rows, a12, status, radius=2.5):
    """Mixed term from a least-squares quadratic through nearby known values."""
    h = grid.h
    tree = cKDTree(grid.boundary_points) if grid.n_boundary else None
    for r in rows:
        i, j = grid.interior_ij[r]
        x0 = grid.interior_points[r]
        pts, refs = [], []
        k = int(np.ceil(radius))
        for di in range(-k, k + 1):
            for dj in range(-k, k + 1):
                if di * di + dj * dj > radius * radius:
                    continue
                ni = grid.node_index[i + di, j + dj]
                if ni >= 0:
                    pts.append((di, dj)), refs.append((0, ni))
        if tree is not None:
            for b in sorted(tree.query_ball_point(x0, radius * h)):
                d = (grid.boundary_points[b] - x0) / h
                pts.append(tuple(d)), refs.append((1, b))
        d = np.array(pts, dtype=float)
        V = np.column_stack([np.ones(len(d)), d[:, 0], d[:, 1], d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2])
        P = np.linalg.pinv(V)
        w = 2 * a12[r] * P[4] / (h * h)
        for (isb, idx), wk in zip(refs, w):
            if isb:
                E.rB.append(np.array([r])), E.cB.append(np.array([idx])), E.vB.append(np.array([wk]))
            else:
                E.rI.append(np.array([r])), E.cI.append(np.array([idx])), E.vI.append(np.array([wk]))


def assemble_conservative_adjoint(field, grid: Grid2D):
    """Discretization of L* v = sum_kl d_kl (a_kl v) in conservative form.

    Returns (D_II, boundary) where ``boundary(psi)`` is the contribution of
    boundary values v = psi.  The constant-coefficient Hessian stencils are
    applied to the nodal products a_kl v, so away from the boundary D_II
    coincides with the transpose of the forward matrix; near a curved
    boundary it stays consistent where the transpose does not.
    """
    from ..fields import ConstantField

    A_I = np.asarray(field(grid.interior_points), dtype=float).reshape(-1, 2, 2)
    A_B = np.asarray(field(grid.boundary_points), dtype=float).reshape(-1, 2, 2)
    parts = []
    for (k, l), E in (((0, 0), [[1.0, 0.0], [0.0, 0.0]]), ((1, 1), [[0.0, 0.0], [0.0, 1.0]]),
                      ((0, 1), [[0.0, 1.0], [1.0, 0.0]])):
        H = assemble(ConstantField(E), grid, check=False)
        parts.append((H, A_I[:, k, l], A_B[:, k, l]))
    D = sum(H.A_II @ sp.diags(aI) for H, aI, _ in parts).tocsr()
    D.sort_indices()

    def boundary(psi):
        psi = np.asarray(psi, dtype=float)
        return sum(H.B @ (aB * psi) for H, _, aB in parts)

    return D, boundary

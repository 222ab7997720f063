"""Masked lattices h Z^2 cut to a square or a disc, with their boundary points."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError

SQUARE = "square"
DISC = "disc"

# A lattice node closer than this (in units of h) to the circle counts as
# lying on it.  Keeps Shortley-Weller arms bounded below.
_ON_CIRCLE = 1e-6

# neighbour offsets: east, west, north, south
ARMS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class Grid2D:
    """Interior lattice nodes of a square [-R, R]^2 or a disc |x| < R.

    Unknowns live on the interior nodes.  Boundary points are the square's
    lattice nodes on its edges, or, for the disc, the points where grid lines
    cross the circle (lattice nodes that sit on the circle included).  Every
    interior node has four arms (E, W, N, S) ending either at an interior
    neighbour (length h) or at a boundary point (length theta*h, theta <= 1).

    Attributes
    ----------
    node_index : (n, n) int, row of an interior node or -1
    lattice_boundary : (n, n) int, boundary-point index of a lattice node or -1
    interior_ij, interior_points : lattice indices and coordinates of unknowns
    arm_len : (N, 4) arm lengths in units of h
    arm_ref : (N, 4) index of the arm's end (interior row or boundary index)
    arm_is_boundary : (N, 4) bool
    boundary_points, boundary_normals, boundary_dsigma : boundary geometry
    depth : (N,) distance to the boundary in units of h
    """

    def __init__(self, h, domain=DISC, radius=1.0):
        if h <= 0:
            raise DomainError("h must be positive")
        if domain not in (SQUARE, DISC):
            raise DomainError(f"unknown domain {domain!r}")
        self.h, self.domain, self.radius = float(h), domain, float(radius)
        m = self.radius / self.h
        if domain == SQUARE and abs(m - round(m)) > 1e-9:
            raise DomainError("square half-width must be a multiple of h")
        self.N = int(math.ceil(m)) + 5
        n = 2 * self.N + 1
        self.shape = (n, n)
        ax = (np.arange(n) - self.N) * self.h
        self._ax = ax
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        if domain == SQUARE:
            mm = int(round(m))
            I, J = np.meshgrid(np.arange(n) - self.N, np.arange(n) - self.N, indexing="ij")
            inside = (np.abs(I) < mm) & (np.abs(J) < mm)
            on = (np.maximum(np.abs(I), np.abs(J)) == mm)
            self._m = mm
        else:
            rr = np.hypot(X, Y)
            inside = rr < self.radius - _ON_CIRCLE * self.h
            on = np.abs(rr - self.radius) <= _ON_CIRCLE * self.h
        self.node_index = np.full(self.shape, -1, dtype=np.int64)
        ii, jj = np.nonzero(inside)
        self.node_index[ii, jj] = np.arange(len(ii))
        self.interior_ij = np.column_stack([ii, jj])
        self.interior_points = np.column_stack([ax[ii], ax[jj]])
        self._build_boundary(X, Y, on)
        self._build_arms()
        if domain == SQUARE:
            self.depth = (self.radius - np.max(np.abs(self.interior_points), axis=1)) / self.h
        else:
            self.depth = (self.radius - np.hypot(*self.interior_points.T)) / self.h

    # ------------------------------------------------------------------
    @property
    def n_interior(self):
        return len(self.interior_ij)

    @property
    def n_boundary(self):
        return len(self.boundary_points)

    def point(self, i, j):
        return np.array([self._ax[i], self._ax[j]])

    def _build_boundary(self, X, Y, on):
        h = self.h
        pts, nrm, ds, lat = [], [], [], []
        self.lattice_boundary = np.full(self.shape, -1, dtype=np.int64)
        bi, bj = np.nonzero(on)
        for i, j in zip(bi, bj):
            x = np.array([X[i, j], Y[i, j]])
            if self.domain == SQUARE:
                nu = np.sign(x) * (np.abs(x) >= self.radius * (1 - 1e-12))
                corner = np.count_nonzero(nu) == 2
                nu = nu / np.linalg.norm(nu)
                # corners share the two half-edges: weight h/sqrt(2) gives the
                # exact flux split between the two sides
                w = h / math.sqrt(2) if corner else h
            else:
                nu = x / np.linalg.norm(x)
                w = h * (abs(nu[0]) + abs(nu[1]))
            self.lattice_boundary[i, j] = len(pts)
            pts.append(x), nrm.append(nu), ds.append(w), lat.append(i * self.shape[1] + j)
        self._crossings = {}
        self.boundary_points = pts
        self.boundary_normals = nrm
        self.boundary_dsigma = ds
        self.boundary_lattice = lat

    def _crossing(self, i, j, d):
        """Boundary point where the arm from node (i, j) in direction d leaves the disc."""
        axis = 0 if d[0] != 0 else 1
        sign = d[axis]
        line = j if axis == 0 else i
        key = (axis, line, sign)
        if key in self._crossings:
            return self._crossings[key]
        c = self._ax[line]
        t = sign * math.sqrt(max(self.radius ** 2 - c * c, 0.0))
        x = np.array([t, c]) if axis == 0 else np.array([c, t])
        nu = x / self.radius
        idx = len(self.boundary_points)
        self.boundary_points.append(x)
        self.boundary_normals.append(nu)
        self.boundary_dsigma.append(self.h * abs(nu[axis]))
        self.boundary_lattice.append(-1)
        self._crossings[key] = idx
        return idx

    def _build_arms(self):
        N = self.n_interior
        self.arm_len = np.ones((N, 4))
        self.arm_ref = np.empty((N, 4), dtype=np.int64)
        self.arm_is_boundary = np.zeros((N, 4), dtype=bool)
        ii, jj = self.interior_ij.T
        for a, d in enumerate(ARMS):
            ni, nj = ii + d[0], jj + d[1]
            nb = self.node_index[ni, nj]
            lb = self.lattice_boundary[ni, nj]
            self.arm_ref[:, a] = nb
            on_lat = (nb < 0) & (lb >= 0)
            self.arm_ref[on_lat, a] = lb[on_lat]
            self.arm_is_boundary[on_lat, a] = True
            cut = np.nonzero((nb < 0) & (lb < 0))[0]
            if len(cut) and self.domain == SQUARE:
                raise AssertionError("square lattice arms must end on lattice nodes")
            axis = 0 if d[0] != 0 else 1
            for r in cut:
                b = self._crossing(ii[r], jj[r], d)
                self.arm_ref[r, a] = b
                self.arm_is_boundary[r, a] = True
                self.arm_len[r, a] = abs(self.boundary_points[b][axis] - self.interior_points[r, axis]) / self.h
        self.boundary_points = np.array(self.boundary_points, dtype=float).reshape(-1, 2)
        self.boundary_normals = np.array(self.boundary_normals, dtype=float).reshape(-1, 2)
        self.boundary_dsigma = np.array(self.boundary_dsigma, dtype=float)
        self.boundary_lattice = np.array(self.boundary_lattice, dtype=np.int64)

    # ------------------------------------------------------------------
    def lattice_status(self):
        """(n, n) int: 1 interior, 2 boundary lattice node, 0 unavailable."""
        s = np.zeros(self.shape, dtype=np.int8)
        s[self.node_index >= 0] = 1
        s[self.lattice_boundary >= 0] = 2
        return s

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.domain == SQUARE:
            return np.max(np.abs(x), axis=-1) <= self.radius
        return np.hypot(x[..., 0], x[..., 1]) <= self.radius

    def describe(self):
        return {"domain": self.domain, "h": self.h, "radius": self.radius,
                "n_interior": self.n_interior, "n_boundary": self.n_boundary}


class GridFunction:
    """Values on the interior nodes, optionally with boundary values."""

    def __init__(self, grid: Grid2D, values, boundary=None):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (grid.n_interior,):
            raise ValueError("values must have one entry per interior node")
        self.boundary = None if boundary is None else np.asarray(boundary, dtype=float)
        if self.boundary is not None and self.boundary.shape != (grid.n_boundary,):
            raise ValueError("boundary values must have one entry per boundary point")

    @classmethod
    def sample(cls, grid, fn, with_boundary=True):
        vals = np.asarray(fn(grid.interior_points), dtype=float)
        bnd = np.asarray(fn(grid.boundary_points), dtype=float) if with_boundary else None
        return cls(grid, vals, bnd)

    def lattice(self):
        """Values on the full lattice, NaN where no value is defined."""
        U = np.full(self.grid.shape, np.nan)
        ii, jj = self.grid.interior_ij.T
        U[ii, jj] = self.values
        if self.boundary is not None:
            lat = self.grid.boundary_lattice
            on = lat >= 0
            U.flat[lat[on]] = self.boundary[on]
        return U

    def is_finite(self):
        ok = np.all(np.isfinite(self.values))
        if self.boundary is not None:
            ok = ok and np.all(np.isfinite(self.boundary))
        return bool(ok)

    def max_abs(self):
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def lp(self, p=2):
        """Discrete l^p norm with weight h^2."""
        h2 = self.grid.h ** 2
        return float(np.sum(np.abs(self.values) ** p) * h2) ** (1.0 / p)

    def interpolate(self, pts, lattice=None):
        """Bilinear interpolation of the lattice values at arbitrary points.

        Corners with zero weight are ignored, so points on lattice nodes or
        lines only need the nodes they touch.  Raises DomainError when a
        needed corner carries no value.
        """
        return bilinear(self.grid, self.lattice() if lattice is None else lattice, pts)


def bilinear(grid: Grid2D, U, pts):
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    f = pts / grid.h + grid.N
    i0 = np.floor(f).astype(np.int64)
    t = f - i0
    # snap rounding noise so that lattice points use a single corner
    snap = np.abs(t - np.round(t)) < 1e-9
    i0 = np.where(snap & (np.round(t) == 1), i0 + 1, i0)
    t = np.where(snap, 0.0, t)
    n0, n1 = U.shape
    if np.any(i0 < 0) or np.any(i0[:, 0] + 1 >= n0) or np.any(i0[:, 1] + 1 >= n1):
        raise DomainError("interpolation point outside the lattice")
    out = np.zeros(len(pts))
    bad = np.zeros(len(pts), dtype=bool)
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1 - t[:, 0]
        for dy in (0, 1):
            w = wx * (t[:, 1] if dy else 1 - t[:, 1])
            val = U[i0[:, 0] + dx, i0[:, 1] + dy]
            use = w > 0
            bad |= use & ~np.isfinite(val)
            out[use] += w[use] * val[use]
    if np.any(bad):
        raise DomainError("interpolation needs a lattice node without a value")
    return out.reshape(shape)

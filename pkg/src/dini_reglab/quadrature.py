"""Norms, oscillations and divergence probes on discs and annuli.

Area integrals use a polar tensor rule: composite Gauss-Legendre panels in the
log-radius s = log r (dA = r^2 ds dtheta), times the periodic trapezoid rule
in the angle.  Both directions are refined by doubling until the change is
below ``tol``; everything is deterministic (fixed node sets, fixed summation
order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AccuracyError, DomainError, PreconditionError
from .tails import CONVERGENT, DivergenceVerdict, TailTest, classify_increments

LOG2 = math.log(2.0)
_MAX_POINTS = 2 ** 24


def _panel_nodes(s0, s1, n_panels, n_gauss):
    x, w = leggauss(n_gauss)
    edges = np.linspace(s0, s1, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return s, ws


def _polar_sum(f, center, s0, s1, n_panels, n_theta, n_gauss, chunk=2 ** 20):
    s, ws = _panel_nodes(s0, s1, n_panels, n_gauss)
    r = np.exp(s)
    wr = ws * r * r
    th = (np.arange(n_theta) + 0.5) * (2 * np.pi / n_theta)
    ct, st = np.cos(th), np.sin(th)
    total = total_abs = 0.0
    rows = max(1, chunk // n_theta)
    for i in range(0, len(r), rows):
        rr = r[i:i + rows]
        pts = np.empty((len(rr), n_theta, 2))
        pts[..., 0] = center[0] + rr[:, None] * ct[None, :]
        pts[..., 1] = center[1] + rr[:, None] * st[None, :]
        vals = np.asarray(f(pts), dtype=float)
        total += float(np.sum(wr[i:i + rows] * np.sum(vals, axis=1)))
        total_abs += float(np.sum(wr[i:i + rows] * np.sum(np.abs(vals), axis=1)))
    return total * (2 * np.pi / n_theta), total_abs * (2 * np.pi / n_theta)


def polar_integrate(f, r_in, r_out, center=(0.0, 0.0), tol=1e-10, atol=0.0, n_gauss=8,
                    n_theta=16, panels_per_octave=2, max_points=_MAX_POINTS):
    """Integral of f over the annulus r_in < |x - center| < r_out in the plane.

    Returns ``(value, achieved_relative_change)``.  The change is measured
    against the integral of |f|, so integrands with zero mean still converge.
    Raises AccuracyError when the point budget is exhausted before ``tol`` is met.
    """
    if not 0 < r_in < r_out:
        raise DomainError("need 0 < r_in < r_out")
    center = np.asarray(center, dtype=float)
    s0, s1 = math.log(r_in), math.log(r_out)
    P = max(1, int(math.ceil((s1 - s0) / LOG2 * panels_per_octave)))
    M = n_theta
    V, _ = _polar_sum(f, center, s0, s1, P, M, n_gauss)
    while True:
        if 2 * P * n_gauss * 2 * M > max_points:
            raise AccuracyError("polar quadrature exhausted its point budget", estimate=V)
        Vr, Ar = _polar_sum(f, center, s0, s1, 2 * P, M, n_gauss)
        Va, Aa = _polar_sum(f, center, s0, s1, P, 2 * M, n_gauss)
        scale = max(abs(V), abs(Vr), abs(Va), Ar, Aa)
        dr, da = abs(Vr - V), abs(Va - V)
        ok_r = dr <= tol * scale + atol
        ok_a = da <= tol * scale + atol
        if ok_r and ok_a:
            best = Vr if dr <= da else Va
            return best, max(dr, da) / scale if scale > 0 else 0.0
        if not ok_r:
            P *= 2
        if not ok_a:
            M *= 2
        if ok_r:
            V = Va
        elif ok_a:
            V = Vr
        else:
            V, _ = _polar_sum(f, center, s0, s1, P, M, n_gauss)


def radial_integrate(g, r_in, r_out, dim=2, tol=1e-12):
    """int over r_in<|x|<r_out of g(|x|) in R^dim (1-D reduction, Gauss panels in log r)."""
    from scipy.special import gamma as gamma_fn

    area = 2 * math.pi ** (dim / 2) / gamma_fn(dim / 2)
    s0, s1 = math.log(r_in), math.log(r_out)
    P = max(1, int(math.ceil((s1 - s0) / LOG2 * 2)))
    prev = None
    for _ in range(16):
        s, ws = _panel_nodes(s0, s1, P, 16)
        r = np.exp(s)
        val = area * float(np.sum(ws * r ** dim * np.asarray(g(r), dtype=float)))
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return val
        prev, P = val, 2 * P
    raise AccuracyError("radial quadrature did not converge", estimate=prev)


def annulus_lp(f, p, r_in, r_out, tol=1e-12, center=(0.0, 0.0), dim=2, radial=None):
    """(int_{r_in<|x|<r_out} |f|^p dx)^(1/p).

    ``f`` is a point-evaluable field on arrays of shape (..., 2).  For
    ``dim > 2`` only radial fields are supported: pass ``radial(r)``.
    """
    if p < 1:
        raise PreconditionError("p must be >= 1")
    if not 0 < r_in < r_out <= 1:
        raise DomainError("need 0 < r_in < r_out <= 1")
    if dim != 2 or (radial is not None and f is None):
        if radial is None:
            raise PreconditionError("dimension > 2 requires a radial profile")
        val = radial_integrate(lambda r: np.abs(radial(r)) ** p, r_in, r_out, dim, tol)
    else:
        val, _ = polar_integrate(lambda x: np.abs(f(x)) ** p, r_in, r_out, center, tol)
    return val ** (1.0 / p)


@dataclass
class AnnulusPartition:
    """Dyadic radii r_max * 2^-k, k = 0..K; annuli [levels[k+1], levels[k]]."""

    levels: np.ndarray
    tol: float = 1e-12

    @classmethod
    def dyadic(cls, K, r_max=1.0, tol=1e-12):
        return cls(r_max * 2.0 ** -np.arange(K + 2), tol)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if np.any(np.diff(self.levels) >= 0):
            raise ValueError("levels must be strictly decreasing")

    def annuli(self):
        return list(zip(self.levels[1:], self.levels[:-1]))


def lp_divergence_probe(f, p, K_levels, r_max=1.0, tol=1e-10, test: TailTest | None = None,
                        radial=None, dim=2) -> DivergenceVerdict:
    """Dyadic increments I_k = int over [2^-(k+1), 2^-k] r_max of |f|^p, k = 0..K_levels."""
    if p < 1:
        raise PreconditionError("p must be >= 1")
    if K_levels < 10:
        raise PreconditionError("K_levels must be >= 10")
    part = AnnulusPartition.dyadic(K_levels, r_max, tol)
    inc = []
    for a, b in part.annuli():
        if radial is not None:
            inc.append(radial_integrate(lambda r: np.abs(radial(r)) ** p, a, b, dim, tol))
        else:
            inc.append(polar_integrate(lambda x: np.abs(f(x)) ** p, a, b, tol=tol)[0])
    inc = np.asarray(inc)
    with np.errstate(divide="ignore"):
        v = classify_increments(np.arange(len(inc)), np.log(inc), test)
    v.extras["p"] = p
    return v


# ---------------------------------------------------------------------------
# mean oscillation


def _is_gridfunction(f):
    return hasattr(f, "grid") and hasattr(f, "values")


def _grid_ball(f, center, r):
    X = f.grid.interior_points
    d = np.hypot(X[:, 0] - center[0], X[:, 1] - center[1])
    sel = d < r
    if not np.any(sel):
        raise DomainError("ball contains no grid nodes")
    return f.values[sel]


def ball_average(f, center, r, tol=1e-8, depth=40):
    center = np.asarray(center, dtype=float)
    if _is_gridfunction(f):
        return float(np.mean(_grid_ball(f, center, r)))
    r_core = r * 2.0 ** -depth
    val, _ = polar_integrate(f, r_core, r, center, tol)
    return val / (math.pi * (r * r - r_core * r_core))


def mean_oscillation(f, center, r, tol=1e-5, depth=40, average=None):
    """|B_r|^-1 int_{B_r(center)} |f - avg| dx, or |f - a| when ``average`` is given.

    ``f`` is either a point-evaluable callable (polar quadrature, the ball is
    covered down to radius r 2^-depth) or a grid function (node average over
    the lattice points inside the ball).
    """
    center = np.asarray(center, dtype=float)
    if r <= 0:
        raise DomainError("radius must be positive")
    if _is_gridfunction(f):
        vals = _grid_ball(f, center, r)
        a = float(np.mean(vals)) if average is None else average
        return float(np.mean(np.abs(vals - a)))
    a = ball_average(f, center, r, tol, depth) if average is None else average
    r_core = r * 2.0 ** -depth
    val, _ = polar_integrate(lambda x: np.abs(f(x) - a), r_core, r, center, tol)
    return val / (math.pi * (r * r - r_core * r_core))


@dataclass
class BMOProbe:
    radii: np.ndarray
    values: np.ndarray
    growth_slope: float
    intercept: float

    def as_rows(self):
        return [{"k": float(-math.log2(r)), "radius": float(r), "oscillation": float(v)}
                for r, v in zip(self.radii, self.values)]


def bmo_probe(f, center, radii, tol=1e-5) -> BMOProbe:
    """Mean oscillation on a family of balls and its slope against log2(1/r)."""
    radii = np.asarray(radii, dtype=float)
    vals = np.array([mean_oscillation(f, center, r, tol) for r in radii])
    k = np.log2(1.0 / radii)
    slope, intercept = np.polyfit(k, vals, 1)
    return BMOProbe(radii, vals, float(slope), float(intercept))


# ---------------------------------------------------------------------------
# exponential integrability


def _log_exp_integral(g, a, b, tol):
    """log int_{a<|x|<b} exp(g(x)) dx, computed with a max shift."""
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    rr = np.geomspace(a, b, 33)
    R_, T_ = np.meshgrid(rr, th, indexing="ij")
    pts = np.stack([R_ * np.cos(T_), R_ * np.sin(T_)], axis=-1)
    m = float(np.max(g(pts)))
    val, _ = polar_integrate(lambda x: np.exp(g(x) - m), a, b, tol=tol)
    return m + math.log(val)


def exp_integral_probe(f, N, c, K_levels, r_max=0.5, tol=1e-8, test: TailTest | None = None,
                       core_depth=40) -> DivergenceVerdict:
    """Dyadic increments of int exp(N |f - c|) toward the origin (in log space)."""
    if N <= 0:
        raise PreconditionError("N must be positive")

    def g(x):
        return N * np.abs(f(x) - c)

    part = AnnulusPartition.dyadic(K_levels, r_max, tol)
    logs = np.array([_log_exp_integral(g, a, b, tol) for a, b in part.annuli()])
    v = classify_increments(np.arange(len(logs)), logs, test)
    v.extras.update({"N": N, "c": c})
    if v.verdict == CONVERGENT:
        inner = part.levels[-1]
        core = _log_exp_integral(g, inner * 2.0 ** -core_depth, inner, tol)
        v.extras["total"] = float(np.exp(np.logaddexp.reduce(np.append(logs, core))))
    return v


# ---------------------------------------------------------------------------
# discrete Sobolev norms on grids


def discrete_w2p(u_h, p, region=None, exclude=None, parts=("value", "gradient", "hessian")):
    """l^p-weighted discrete W^{2,p} norm of a grid function over ``region``.

    Centered differences on the lattice; every region node must sit at least
    two cells inside the domain.  ``region`` is a boolean mask over interior
    nodes or a callable of points; ``exclude`` removes nodes (e.g. a singular
    origin) from the sum while keeping their values in neighbours' stencils.
    """
    grid = u_h.grid
    X = grid.interior_points
    if region is None:
        mask = grid.depth >= 2
    elif callable(region):
        mask = np.asarray(region(X), dtype=bool)
    else:
        mask = np.asarray(region, dtype=bool)
    if np.any(mask & (grid.depth < 2)):
        raise DomainError("region must stay two cells inside the domain")
    if exclude is not None:
        mask = mask & ~np.asarray(exclude(X) if callable(exclude) else exclude, dtype=bool)
    U = u_h.lattice()
    I, J = grid.interior_ij[mask, 0], grid.interior_ij[mask, 1]
    h = grid.h
    u0 = U[I, J]
    terms = 0.0
    if "value" in parts:
        terms = terms + np.abs(u0) ** p
    if "gradient" in parts:
        gx = (U[I + 1, J] - U[I - 1, J]) / (2 * h)
        gy = (U[I, J + 1] - U[I, J - 1]) / (2 * h)
        terms = terms + np.hypot(gx, gy) ** p
    if "hessian" in parts:
        uxx = (U[I + 1, J] - 2 * u0 + U[I - 1, J]) / h ** 2
        uyy = (U[I, J + 1] - 2 * u0 + U[I, J - 1]) / h ** 2
        uxy = (U[I + 1, J + 1] + U[I - 1, J - 1] - U[I + 1, J - 1] - U[I - 1, J + 1]) / (4 * h ** 2)
        terms = terms + np.sqrt(uxx ** 2 + uyy ** 2 + 2 * uxy ** 2) ** p
    return float(np.sum(terms) * h * h) ** (1.0 / p)

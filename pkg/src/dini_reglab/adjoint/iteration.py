"""Dyadic harmonic-approximation iteration for adjoint solutions.

Coordinates.  The base grid is the unit disc and plays the role of B_4, so
the unit ball of the iteration has radius ``unit`` = 1/4 in base units.
Around a center c the iteration works in normalized coordinates

    x = c + unit * scale * S y,      S = A(c)^{1/2},

in which the transported coefficients S^{-1} A S^{-1} equal I at y = 0.
Level k lives on a fresh unit-disc grid of spacing ``level_h`` with
scale = delta 4^{-k}.  Level 0 samples v; every later level solves its
rescaled adjoint problem on its own grid, with coefficients and sources
evaluated directly, and with boundary values given by the previous
remainder at y/4.  With delta = 1, S = I, c on the base lattice and
level_h = h_base / unit, the level-0 nodes coincide with base nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ..errors import DomainError
from ..fdsolver.grid import Grid2D, GridFunction
from ..fdsolver.krylov import SolverConfig
from ..fdsolver.stencil import assemble
from ..fields import AffineTransportedField
from ..moduli import ModulusSpec, eval_modulus, eval_sigma
from .harmonic import M_DEFAULT, HarmonicPiece, harmonic_replacement, interior_estimate_constant, shell_select
from .transpose import AdjointData, assemble_adjoint_rhs, solve_adjoint


@dataclass
class Normalization:
    center: np.ndarray
    unit: float
    S: np.ndarray
    S_inv: np.ndarray

    def to_base(self, y, scale=1.0):
        return self.center + self.unit * scale * (np.asarray(y, dtype=float) @ self.S.T)

    def field(self, base, scale):
        return AffineTransportedField(base, self.center, self.unit * scale, self.S, self.S_inv)


def normalization(field, center=(0.0, 0.0), unit=1.0) -> Normalization:
    """Congruence S = A(center)^{1/2} that makes the transported field I at 0."""
    c = np.asarray(center, dtype=float)
    if field is None:
        S = np.eye(2)
    else:
        A0 = np.asarray(field(c[None, :]), dtype=float)[0]
        w, V = np.linalg.eigh(A0)
        S = (V * np.sqrt(w)) @ V.T
    return Normalization(c, float(unit), S, np.linalg.inv(S))


def transported_omega(spec: ModulusSpec | None, norm: Normalization):
    """omega(t) = t^2 + theta~(t) for the transported field, where
    theta~(t) = |S^{-1}|^2 theta(unit |S| t) bounds the oscillation of S^{-1} A S^{-1}."""
    a = float(np.linalg.norm(norm.S_inv, 2)) ** 2
    b = norm.unit * float(np.linalg.norm(norm.S, 2))

    def theta(t):
        t = np.asarray(t, dtype=float)
        return a * eval_modulus(spec, b * t) if spec is not None else np.zeros_like(t)

    def omega(t):
        t = np.asarray(t, dtype=float)
        return t ** 2 + theta(t)

    return omega, theta


def _sample(v: GridFunction, pts, U=None):
    return v.interpolate(pts, U)


def _zeta_values(zeta, pts):
    if zeta is None:
        return np.zeros(len(pts))
    return np.asarray(zeta(pts), dtype=float)


@dataclass
class RescaleState:
    delta: float
    delta_bar: float
    v_delta: GridFunction
    zeta_delta: GridFunction
    M: float
    omega_delta: float
    v_norm: float  # ||v||_{L^p(B_1)} in normalized coordinates
    zeta_sup: float
    invariants: dict = field(default_factory=dict)


def rescale(v: GridFunction, zeta, delta, p, M=M_DEFAULT, omega=None, norm: Normalization | None = None,
            level_h=None, tol=0.05) -> RescaleState:
    """v_delta(y) = delta_bar v(delta y), zeta_delta(y) = delta_bar delta^2 zeta(delta y).

    ``v`` is a grid function on the base grid and ``zeta`` a callable of base
    points (or None).  ``norm`` maps the unit ball to the base grid (default:
    the identity, so v's own grid is the unit ball).  Values are resampled
    bilinearly; with the identity map and delta = 1 nothing is resampled.
    """
    if not 0 < delta <= 1:
        raise DomainError("delta must lie in (0, 1]")
    norm = norm or Normalization(np.zeros(2), 1.0, np.eye(2), np.eye(2))
    if omega is None:
        omega, _ = transported_omega(None, norm)
    identity = (norm.unit == 1.0 and not np.any(norm.center) and np.allclose(norm.S, np.eye(2))
                and (level_h is None or level_h == v.grid.h))
    g = v.grid if identity else Grid2D(level_h or v.grid.h / norm.unit)
    U = v.lattice()

    def v_at(y, scale):
        if identity and scale == 1.0:
            return v.values.copy()
        return _sample(v, norm.to_base(y, scale), U)

    def zeta_at(y, scale):
        # sources transform with the square of the length scale
        return (norm.unit * scale) ** 2 * _zeta_values(zeta, norm.to_base(y, scale))

    # points outside the base grid raise DomainError in the interpolation
    v1 = GridFunction(g, v_at(g.interior_points, 1.0))
    z1 = np.concatenate([zeta_at(g.interior_points, 1.0), zeta_at(g.boundary_points, 1.0)])
    v_norm = v1.lp(p)
    z_sup = float(np.max(np.abs(z1))) if len(z1) else 0.0
    n = 2
    om = float(omega(delta))
    dbar = delta ** (n / p) * om / (M * (1 + v_norm + z_sup))
    vd = GridFunction(g, dbar * (v1.values if delta == 1.0 else v_at(g.interior_points, delta)))
    zd = GridFunction(g, dbar * zeta_at(g.interior_points, delta), dbar * zeta_at(g.boundary_points, delta))
    v_ratio = vd.lp(p) / (om / M)
    z_ratio = (zd.max_abs() / (delta ** 2 * om / M)) if om > 0 else 0.0
    inv = {"v_ratio": v_ratio, "zeta_ratio": z_ratio,
           "v_ok": bool(v_ratio <= 1 + tol), "zeta_ok": bool(z_ratio <= 1 + tol)}
    return RescaleState(float(delta), dbar, vd, zd, float(M), om, v_norm, z_sup, inv)


@dataclass
class HarmonicSequence:
    delta: float
    delta_bar: float
    M: float
    p: float
    norm: Normalization
    omega: object
    theta: object
    state: RescaleState
    shells: list = field(default_factory=list)
    pieces: list = field(default_factory=list)  # HarmonicPiece per level (normalized coordinates)
    remainders: list = field(default_factory=list)  # W_k as GridFunctions on the level grids
    ratio_W: list = field(default_factory=list)  # ||W_k|| / omega(4^-k delta)
    ratio_h: list = field(default_factory=list)  # ||h~_k||_{B_3/4} / omega(4^-k delta)
    ratio_sup: list = field(default_factory=list)  # (||h~_k||_inf + ||grad h~_k||_inf)(B_1/2) / omega
    G_norms: list = field(default_factory=list)  # ||G_{k+1}||_p, k = 0..K-1
    G_ratio: list = field(default_factory=list)  # ||G_{k+1}||_p / theta(4^-k-1 delta)
    duality: list = field(default_factory=list)
    truncated: str = ""

    @property
    def levels(self):
        return len(self.pieces)

    def center_values(self):
        """h~_k(0) for every level."""
        return np.array([float(hp(np.zeros((1, 2)))[0]) for hp in self.pieces])

    def partial_sums(self):
        """Partial sums of sum_j h_j(0) divided by delta_bar (original units of v)."""
        return np.cumsum(self.center_values()) / self.delta_bar

    def limit_value(self):
        ps = self.partial_sums()
        return float(ps[-1]) if len(ps) else float("nan")

    def rows(self):
        out = []
        for k in range(self.levels):
            out.append({"k": k, "t": self.shells[k].t, "omega": float(self.omega(4.0 ** -k * self.delta)),
                        "ratio_W": self.ratio_W[k], "ratio_h": self.ratio_h[k],
                        "ratio_sup": self.ratio_sup[k],
                        "G_norm": self.G_norms[k - 1] if k >= 1 else 0.0,
                        "G_ratio": self.G_ratio[k - 1] if k >= 1 else 0.0})
        return out

    def W_ratio_spread(self, start=1):
        r = np.array(self.ratio_W[start:])
        return float(r.max() / r.min()) if len(r) and r.min() > 0 else float("inf")


def _lp(values, h, p):
    return float(np.sum(np.abs(values) ** p) * h * h) ** (1 / p)


def dyadic_iteration(v: GridFunction, field, zeta, K_levels, p=2.0, delta=0.25, center=(0.0, 0.0),
                     unit=0.25, M=M_DEFAULT, level_h=None, cfg: SolverConfig | None = None,
                     window=(0.75, 1.0), min_nodes=16) -> HarmonicSequence:
    """Run levels 0..K_levels of the iteration around ``center``.

    ``v`` is an adjoint solution on the base (unit-disc) grid of the problem
    L* v = zeta with coefficients ``field``; ``zeta`` is a callable of base
    points or None.  ``delta`` is a number in (0, 1] or "auto" (see
    select_delta).  Returns the harmonic pieces, remainders and every
    measured ratio.
    """
    norm = normalization(field, center, unit)
    omega, theta = transported_omega(getattr(field, "modulus", None), norm)
    if delta == "auto":
        delta = select_delta(omega, M, p)
    delta = float(delta)
    level_h = level_h or v.grid.h / unit
    c = np.asarray(center, dtype=float)
    reach = float(np.hypot(*c)) + unit * delta * float(np.linalg.norm(norm.S, 2))
    if reach > v.grid.radius:
        raise DomainError("the unit ball around the center leaves the base grid")
    state = rescale(v, zeta, delta, p, M, omega, norm, level_h)
    seq = HarmonicSequence(delta, state.delta_bar, float(M), float(p), norm, omega, theta, state)
    across = 2 * unit * delta / (v.grid.h * float(np.linalg.norm(norm.S, 2)))
    if across < min_nodes:
        seq.truncated = f"level 0 spans {across:.1f} base nodes (< {min_nodes}); no level computed"
        return seq
    g = state.v_delta.grid
    W = state.v_delta
    for k in range(K_levels + 1):
        om = float(omega(4.0 ** -k * delta))
        shell = shell_select(W, p, window)
        hp = harmonic_replacement(W, shell.t)
        seq.shells.append(shell)
        seq.pieces.append(hp)
        seq.remainders.append(W)
        seq.ratio_W.append(W.lp(p) / om)
        seq.ratio_h.append(hp.lp(p, 0.75) / om)
        sup, grad = hp.sup_and_gradient(0.5)
        seq.ratio_sup.append((sup + grad) / om)
        if k == K_levels:
            break
        W = _next_level(seq, g, W, hp, field, zeta, k, cfg)
    return seq


def _next_level(seq: HarmonicSequence, g: Grid2D, W: GridFunction, hp: HarmonicPiece, field, zeta, k, cfg):
    """Solve for W_{k+1} on a fresh grid of the same spacing."""
    L = k + 1
    scale = seq.delta * 4.0 ** -L
    fld = seq.norm.field(field, scale)
    op = assemble(fld, g)
    pts_i, pts_b = g.interior_points, g.boundary_points

    def hsum(pts):
        s = np.zeros(len(pts))
        for j, piece in enumerate(seq.pieces):
            s += piece(4.0 ** (j - L) * pts)
        return s

    I2 = np.eye(2)
    A_i, A_b = op.coefficients, np.asarray(fld(pts_b), dtype=float)
    G_i = (I2 - A_i) * hsum(pts_i)[:, None, None]
    G_b = (I2 - A_b) * hsum(pts_b)[:, None, None]
    eta = seq.delta_bar * (seq.norm.unit * scale) ** 2 * _zeta_values(zeta, seq.norm.to_base(pts_i, scale))
    # boundary values of W_{k+1}: the previous remainder minus its harmonic part at y/4
    b = W.interpolate(pts_b / 4) - hp(pts_b / 4)
    nu = g.boundary_normals
    Gnn = np.einsum("bi,bij,bj->b", nu, G_b, nu)
    Ann = np.einsum("bi,bij,bj->b", nu, A_b, nu)
    psi = b - Gnn / Ann
    data = AdjointData(Phi=G_i, eta=eta, psi=psi, p=seq.p)
    sol = solve_adjoint(op, assemble_adjoint_rhs(data, g, op, cfg), cfg, p=seq.p, n_tests=4, seed=L)
    Gn = _lp(np.linalg.norm(G_i, ord=2, axis=(1, 2)), g.h, seq.p)
    seq.G_norms.append(Gn)
    th = float(seq.theta(scale))
    seq.G_ratio.append(Gn / th if th > 0 else 0.0)
    seq.duality.append(sol.duality_residual)
    return GridFunction(g, sol.v.values, b)


# ---------------------------------------------------------------------------
# delta selection


def omega_dini_integral(omega, delta):
    """int_0^delta omega(t)/t dt via the substitution t = delta e^{-u}."""
    val, _ = integrate.quad(lambda u: float(omega(delta * math.exp(-u))), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def induction_constant(M, p, n=2):
    """C = 2 C(n,p) [4^{2+n/p} M + 1], with C(n,p) the interior estimate constant."""
    return 2 * interior_estimate_constant(p, n) * (4 ** (2 + n / p) * M + 1)


def smallness(omega, delta, M, p, n=2):
    """2M [32 |B_1|^{1/p} C int_0^delta omega/t + omega(delta)]; admissible when <= 1."""
    C = induction_constant(M, p, n)
    B1 = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return 2 * M * (32 * B1 ** (1 / p) * C * omega_dini_integral(omega, delta) + float(omega(delta)))


def select_delta(omega, M, p, n=2, lo=1e-30, iters=200):
    """Largest delta in (lo, 1] with smallness(delta) <= 1, by bisection in log delta."""
    if smallness(omega, 1.0, M, p, n) <= 1:
        return 1.0
    if smallness(omega, lo, M, p, n) > 1:
        raise DomainError("no admissible delta above the search floor")
    a, b = math.log(lo), 0.0
    for _ in range(iters):
        m = 0.5 * (a + b)
        if smallness(omega, math.exp(m), M, p, n) <= 1:
            a = m
        else:
            b = m
        if b - a < 1e-12:
            break
    return math.exp(a)


# ---------------------------------------------------------------------------
# continuity


@dataclass
class ContinuityEstimate:
    center: np.ndarray
    limit_value: float
    radii: np.ndarray
    oscillation: np.ndarray
    sigma: np.ndarray
    C: float
    fit_residual: float  # ||osc - C sigma|| / ||osc||
    partial_sums: np.ndarray
    sequence: HarmonicSequence | None = None
    flagged: str = ""

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.oscillation) < 0))

    @property
    def decay(self):
        return float(self.oscillation[-1] / self.oscillation[0])

    def rows(self):
        return [{"r": float(r), "oscillation": float(o), "sigma": float(s), "C_sigma": float(self.C * s)}
                for r, o, s in zip(self.radii, self.oscillation, self.sigma)]


def continuity_estimate(v: GridFunction, field, zeta, center, radii, K_levels=3, p=2.0, delta=1.0,
                        unit=0.25, M=M_DEFAULT, cfg=None, level_h=None) -> ContinuityEstimate:
    """Mean oscillation of v around a(center) = sum_j h_j(0) over the given radii.

    Radii are in base units.  The oscillation uses the grid nodes within
    each radius; C is the least-squares factor in oscillation ~ C sigma(r)
    with sigma built from the field's modulus.
    """
    from ..quadrature import mean_oscillation

    seq = dyadic_iteration(v, field, zeta, K_levels, p, delta, center, unit, M, level_h, cfg)
    a = seq.limit_value()
    radii = np.asarray(radii, dtype=float)
    flagged = seq.truncated
    if seq.levels == 0:
        flagged = flagged or "iteration produced no level"
    osc = np.array([mean_oscillation(v, center, r, average=a) for r in radii])
    spec = getattr(field, "modulus", None) or ModulusSpec.power(1.0, 0.0)
    sig = np.asarray(eval_sigma(spec, radii), dtype=float)
    C = float(osc @ sig / (sig @ sig))
    res = float(np.linalg.norm(osc - C * sig) / np.linalg.norm(osc))
    return ContinuityEstimate(np.asarray(center, float), a, radii, osc, sig, C, res,
                              seq.partial_sums(), seq, flagged)


def two_point_continuity(v: GridFunction, field, zeta, pairs, K_levels=3, p=2.0, delta=1.0,
                         unit=0.25, M=M_DEFAULT, cfg=None):
    """|a(x) - a(y)| / sigma(2r) for point pairs with |x - y| in [r/2, r], r = |x - y| rounded
    up to the next power of two.  Returns (C', rows)."""
    spec = getattr(field, "modulus", None) or ModulusSpec.power(1.0, 0.0)
    cache = {}

    def a_at(x):
        key = tuple(np.round(x, 12))
        if key not in cache:
            cache[key] = dyadic_iteration(v, field, zeta, K_levels, p, delta, x, unit, M, cfg=cfg).limit_value()
        return cache[key]

    rows = []
    for x, y in pairs:
        x, y = np.asarray(x, float), np.asarray(y, float)
        d = float(np.hypot(*(x - y)))
        r = 2.0 ** math.ceil(math.log2(d))
        diff = abs(a_at(x) - a_at(y))
        s2 = float(eval_sigma(spec, min(2 * r, 1.0)))
        rows.append({"x": x.tolist(), "y": y.tolist(), "dist": d, "r": r, "diff": diff,
                     "sigma_2r": s2, "ratio": diff / s2})
    return max(r["ratio"] for r in rows), rows

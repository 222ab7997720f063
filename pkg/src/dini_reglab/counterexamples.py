"""Closed-form counterexample operators I + alpha(r) x/r (x) x/r and their solutions.

Two constructions are provided.

* ``W21``: the radial solution u(r) = int_r^1 t^(1-n) (log(R/t))^(-gamma) dt,
  which lies in W^{2,1} but has D^2 u outside every L^p, p > 1.
* ``BMO``: u(x) = x1 x2 (log(R/r))^2, whose mixed derivative grows like
  (log(R/r))^2 at the origin, so it is not of bounded mean oscillation.

Both alpha profiles are continuous, vanish at the origin, and are *not* Dini.
R is stored through log R, which may be large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import DomainError, EllipticityError, SingularPointError
from .fields import RadialCoefficientField

R_FLOOR = 1e-12


def _check_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("radius must be positive")
    return r


class AlphaProfile:
    """alpha as a function of r, also evaluable through u = log(1/r)."""

    def __init__(self, of_log, name):
        self.of_log = of_log
        self.name = name

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, self.of_log(np.log(1.0 / np.where(r > 0, r, 1.0))), 0.0)


# ---------------------------------------------------------------------------
# W^{2,1} solution whose Hessian is in no L^p, p > 1


@dataclass(frozen=True)
class W21Params:
    gamma: float = 2.0
    logR: float = 10.0
    dim: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1 for u to be in W^{2,1}")
        if not (self.dim - 1) * self.logR > self.gamma:
            raise EllipticityError("(n-1) log R must exceed gamma")

    def log_ratio(self, r):
        """log(R/r)."""
        return self.logR + np.log(1.0 / r)

    def alpha_profile(self):
        g, n, lr = self.gamma, self.dim, self.logR
        return AlphaProfile(lambda u: g / ((n - 1) * (lr + u) - g), f"w21(gamma={g}, logR={lr})")


def _w21_u(params, r):
    n, g, lr = params.dim, params.gamma, params.logR
    if r == 1.0:
        return 0.0
    s_max = math.log(1.0 / r)
    val, err = integrate.quad(lambda s: math.exp((n - 2) * s) * (lr + s) ** (-g), 0.0, s_max,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def w21_derivs(params: W21Params, r):
    """(u, u', u'') of the radial W^{2,1} counterexample at radius r > 0."""
    r = _check_radius(r)
    n, g = params.dim, params.gamma
    L = params.log_ratio(r)
    du = -r ** (1 - n) * L ** (-g)
    d2u = r ** (-n) * L ** (-g) * (n - 1 - g / L)
    u = np.vectorize(lambda s: _w21_u(params, float(s)))(r)
    if u.ndim == 0:
        return float(u), float(du), float(d2u)
    return u, du, d2u


def w21_alpha(params: W21Params, r):
    r = _check_radius(r)
    n, g = params.dim, params.gamma
    den = (n - 1) * params.log_ratio(r) - g
    if np.any(den <= 0):
        raise EllipticityError("(n-1) log(R/r) must exceed gamma")
    out = g / den
    return float(out) if np.ndim(out) == 0 else out


def radial_hessian(x, du, d2u):
    """D^2 of a radial function from (u', u'') at the points x (..., n)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    xh = x / r[..., None]
    P = xh[..., :, None] * xh[..., None, :]
    eye = np.eye(x.shape[-1])
    du, d2u = np.asarray(du)[..., None, None], np.asarray(d2u)[..., None, None]
    return d2u * P + (du / r[..., None, None]) * (eye - P)


def w21_hessian(params: W21Params, x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= 0):
        raise SingularPointError("W21 Hessian is singular at the origin")
    n, g = params.dim, params.gamma
    L = params.log_ratio(r)
    du = -r ** (1 - n) * L ** (-g)
    d2u = r ** (-n) * L ** (-g) * (n - 1 - g / L)
    return radial_hessian(x, du, d2u)


def w21_hessian_norm(params: W21Params, r):
    """Frobenius norm |D^2 u| as a function of r."""
    r = _check_radius(r)
    n, g = params.dim, params.gamma
    L = params.log_ratio(r)
    d2u = r ** (-n) * L ** (-g) * (n - 1 - g / L)
    du_r = r ** (-n) * L ** (-g)
    return np.sqrt(d2u ** 2 + (n - 1) * du_r ** 2)


def w21_value(params: W21Params, x):
    """u at points x (..., n); the origin takes its finite limit u(0)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    out = np.empty_like(r)
    flat_r, flat = r.ravel(), out.ravel()
    for i, ri in enumerate(flat_r):
        flat[i] = _w21_u(params, ri) if ri > 0 else w21_limit_at_origin(params)
    return out


def w21_limit_at_origin(params: W21Params):
    if params.dim != 2:
        return math.inf
    g, lr = params.gamma, params.logR
    return lr ** (1 - g) / (g - 1)


# ---------------------------------------------------------------------------
# solution whose mixed derivative is not in BMO


def _bmo_admissible(logR, dim, n_r=400, n_theta=64):
    if logR ** 2 - 3 * logR + 1 <= 0 or logR <= (3 + math.sqrt(5)) / 2:
        return False
    p = BMOParams.__new__(BMOParams)
    object.__setattr__(p, "logR", logR)
    object.__setattr__(p, "dim", dim)
    r = np.geomspace(1e-6, 1.0, n_r)
    a = bmo_alpha(p, r, check=False)
    if np.any(~np.isfinite(a)) or np.min(1 + a) <= 0:
        return False
    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    th = np.concatenate([th, [np.pi / 2, 0.0]])
    R_, T_ = np.meshgrid(r, th, indexing="ij")
    x = np.zeros(R_.shape + (dim,))
    x[..., 0], x[..., 1] = R_ * np.cos(T_), R_ * np.sin(T_)
    H = bmo_solution(p, x)[2]
    L = logR + np.log(1.0 / R_)
    return bool(np.all(H[..., 0, 1] >= 0.5 * L ** 2))


@lru_cache(maxsize=16)
def find_bmo_logR(dim=2, start=2.62, step=0.01, stop=40.0):
    """Smallest log R on a grid for which the BMO construction is admissible:
    positive alpha denominator, ellipticity, and d12 u >= (log(R/r))^2 / 2 on samples.

    Scans a coarse grid (10 * step) first, then the fine grid below the first
    coarse hit; admissibility is monotone in log R for this family.
    """
    grid = np.round(np.arange(start, stop + step / 2, step), 10)
    coarse = grid[::10]
    hit = next((i for i, lr in enumerate(coarse) if _bmo_admissible(float(lr), dim)), None)
    if hit is None:
        raise EllipticityError("no admissible log R found")
    lo = max(0, 10 * (hit - 1))
    for lr in grid[lo:10 * hit + 1]:
        if _bmo_admissible(float(lr), dim):
            return float(lr)
    return float(coarse[hit])


@dataclass(frozen=True)
class BMOParams:
    logR: float | None = None
    dim: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")
        if self.logR is None:
            object.__setattr__(self, "logR", find_bmo_logR(self.dim))
        lr = self.logR
        if lr ** 2 - 3 * lr + 1 <= 0 or lr <= (3 + math.sqrt(5)) / 2:
            raise EllipticityError("log R too small: alpha denominator not positive on (0, 1]")
        a = bmo_alpha(self, np.geomspace(1e-12, 1.0, 1000))
        if np.min(1 + a) <= 0:
            raise EllipticityError("1 + alpha must stay positive")

    def log_ratio(self, r):
        return self.logR + np.log(1.0 / r)

    def alpha_profile(self):
        n, lr = self.dim, self.logR
        return AlphaProfile(lambda u: ((2 + n) * (lr + u) - 1) / ((lr + u) ** 2 - 3 * (lr + u) + 1),
                            f"bmo(logR={lr})")


def bmo_alpha(params: BMOParams, r, check=True):
    r = _check_radius(r)
    L = params.log_ratio(r)
    den = L ** 2 - 3 * L + 1
    if check and np.any(den <= 0):
        raise EllipticityError("alpha denominator must be positive")
    out = ((2 + params.dim) * L - 1) / den
    return float(out) if np.ndim(out) == 0 else out


def bmo_phi(params, r):
    """phi, phi', phi'' for phi(r) = (log(R/r))^2."""
    L = params.log_ratio(r)
    return L ** 2, -2 * L / r, (2 + 2 * L) / r ** 2


def bmo_solution(params: BMOParams, x):
    """(u, grad u, D^2 u) of u = x1 x2 (log(R/r))^2 at points x (..., n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= 0):
        raise SingularPointError("BMO solution is singular at the origin")
    phi, dphi, d2phi = bmo_phi(params, r)
    x1, x2 = x[..., 0], x[..., 1]
    g = x1 * x2
    grad_g = np.zeros_like(x)
    grad_g[..., 0], grad_g[..., 1] = x2, x1
    xh = x / r[..., None]
    u = g * phi
    grad = phi[..., None] * grad_g + (g * dphi)[..., None] * xh
    P = xh[..., :, None] * xh[..., None, :]
    eye = np.eye(n)
    D2g = np.zeros(x.shape[:-1] + (n, n))
    D2g[..., 0, 1] = D2g[..., 1, 0] = 1.0
    D2phi = d2phi[..., None, None] * P + (dphi / r)[..., None, None] * (eye - P)
    cross = grad_g[..., :, None] * xh[..., None, :]
    hess = phi[..., None, None] * D2g + dphi[..., None, None] * (cross + np.swapaxes(cross, -1, -2)) \
        + g[..., None, None] * D2phi
    return u, grad, hess


def bmo_d12(params: BMOParams, x):
    """Closed form of d12 u (the quantity that escapes BMO)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= 0):
        raise SingularPointError("d12 u is singular at the origin")
    phi, dphi, d2phi = bmo_phi(params, r)
    x1, x2 = x[..., 0], x[..., 1]
    return phi + (x1 ** 2 + x2 ** 2) * dphi / r + x1 ** 2 * x2 ** 2 * (d2phi / r ** 2 - dphi / r ** 3)


# ---------------------------------------------------------------------------
# operator


def coefficient_field(alpha_profile, n=2, name="radial"):
    field = RadialCoefficientField(alpha_profile, dim=n, name=name)
    lo, _ = field.ellipticity()
    if lo <= 0:
        raise EllipticityError(f"lambda_min = {lo} <= 0")
    return field


def apply_operator(field, hessian, x):
    """tr(A(x) H) for Hessians H (..., n, n) at points x (..., n)."""
    A = field(x)
    return np.einsum("...ij,...ij->...", A, hessian)


def w21_residual(params: W21Params, r):
    """(1 + alpha) u'' + (n - 1) u'/r and the local scale |u''|."""
    r = _check_radius(r)
    n, g = params.dim, params.gamma
    L = params.log_ratio(r)
    du = -r ** (1 - n) * L ** (-g)
    d2u = r ** (-n) * L ** (-g) * (n - 1 - g / L)
    a = w21_alpha(params, r)
    return (1 + a) * d2u + (n - 1) * du / r, np.abs(d2u)


def bmo_residual(params: BMOParams, x):
    """tr(A D^2 u) and the local Hessian scale (1 + |alpha|) |D^2 u|."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    field = RadialCoefficientField(params.alpha_profile(), dim=x.shape[-1])
    H = bmo_solution(params, x)[2]
    a = bmo_alpha(params, r)
    return apply_operator(field, H, x), (1 + np.abs(a)) * np.linalg.norm(H, axis=(-2, -1))

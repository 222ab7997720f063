"""Coefficient fields x -> A(x) (symmetric, uniformly elliptic, 2x2 or n x n).

Every field is called on an array of points of shape (..., n) and returns
(..., n, n).  Fields carry an optional modulus of continuity so that the
multiscale iteration can form omega(t) = t^2 + theta(t).
"""

from __future__ import annotations

import numpy as np

from .errors import EllipticityError
from .moduli import ModulusSpec


class CoefficientField:
    dim = 2
    modulus: ModulusSpec | None = None
    name = "field"

    def __call__(self, x):
        raise NotImplementedError

    def ellipticity(self, samples=None):
        """(lambda_min, lambda_max) of A over sample points of the unit disc."""
        if samples is None:
            g = np.linspace(-1, 1, 41)
            X, Y = np.meshgrid(g, g, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
            pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= 1]
        else:
            pts = np.asarray(samples, dtype=float)
        A = self(pts)
        if not np.allclose(A, np.swapaxes(A, -1, -2), atol=1e-13):
            raise EllipticityError(f"{self.name}: coefficient matrix not symmetric")
        ev = np.linalg.eigvalsh(A)
        return float(ev.min()), float(ev.max())

    def check(self):
        lo, _ = self.ellipticity()
        if lo <= 0:
            raise EllipticityError(f"{self.name}: lambda_min = {lo} <= 0")
        return self


class ConstantField(CoefficientField):
    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        self.dim = self.A.shape[0]
        self.name = "constant"
        self.modulus = ModulusSpec.power(1.0, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.A, x.shape[:-1] + self.A.shape).copy()


def identity_field(n=2):
    f = ConstantField(np.eye(n))
    f.name = "identity"
    return f


class MatrixFunctionField(CoefficientField):
    """Wrap an arbitrary callable returning (..., n, n); no ellipticity check.

    Used for matrix-valued data such as the source Phi of adjoint problems.
    """

    def __init__(self, fn, dim=2, name="matrix-function", modulus=None):
        self.fn, self.dim, self.name, self.modulus = fn, dim, name, modulus

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


class RadialCoefficientField(CoefficientField):
    """A(x) = I + alpha(|x|) (x/|x|) (x/|x|)^T, with A(0) = I."""

    def __init__(self, alpha, dim=2, name="radial", modulus=None, r_floor=1e-12):
        self.alpha, self.dim, self.name, self.modulus = alpha, dim, name, modulus
        self.r_floor = r_floor

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > self.r_floor, r, 1.0)
        a = np.where(r > self.r_floor, self.alpha(safe), 0.0)
        xh = x / safe[..., None]
        xh = np.where((r > self.r_floor)[..., None], xh, 0.0)
        return np.eye(self.dim) + a[..., None, None] * xh[..., :, None] * xh[..., None, :]

    def ellipticity(self, samples=None):
        if samples is not None:
            return super().ellipticity(samples)
        r = np.geomspace(1e-12, 1.0, 2000)
        a = self.alpha(r)
        return float(min(1.0, 1.0 + a.min())), float(max(1.0, 1.0 + a.max()))


class SmoothRadialField(RadialCoefficientField):
    """A = I + amp * (1 - exp(-r^2/eps^2)) x (x) x / r^2: smooth, A(0) = I."""

    def __init__(self, amp=0.25, eps=0.25):
        super().__init__(lambda r: amp * -np.expm1(-(r / eps) ** 2), name=f"smooth-radial:{amp}")
        self.amp, self.eps = amp, eps
        # Lipschitz, so theta(t) = L t is a valid (Dini) modulus
        self.modulus = ModulusSpec.power(1.0, 2 * amp / eps)


class HolderField(CoefficientField):
    """A(x) = I + kappa * min_c |x - c|^beta * D0.

    Hoelder (hence Dini) with modulus kappa*|D0|*t^beta, and A(c) = I at every
    kink c.  D0 defaults to diag(1, 1/2).
    """

    def __init__(self, beta=0.5, kappa=0.5, kinks=((0.0, 0.0),), D0=None):
        self.beta, self.kappa = float(beta), float(kappa)
        self.kinks = np.atleast_2d(np.asarray(kinks, dtype=float))
        self.D0 = np.diag([1.0, 0.5]) if D0 is None else np.asarray(D0, dtype=float)
        self.dim = 2
        self.name = f"holder:{beta}"
        self.modulus = ModulusSpec.power(self.beta, self.kappa * float(np.linalg.norm(self.D0, 2)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = np.min(np.linalg.norm(x[..., None, :] - self.kinks, axis=-1), axis=-1)
        return np.eye(2) + (self.kappa * d ** self.beta)[..., None, None] * self.D0


class AffineTransportedField(CoefficientField):
    """y -> T^{-1} A(center + scale * S y) T^{-T}; used to rescale and normalize A."""

    def __init__(self, base, center, scale, S, T_inv):
        self.base, self.center, self.scale = base, np.asarray(center, float), float(scale)
        self.S, self.T_inv = np.asarray(S, float), np.asarray(T_inv, float)
        self.dim = base.dim
        self.name = f"{base.name}@scaled"
        self.modulus = base.modulus

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        x = self.center + self.scale * (y @ self.S.T)
        A = self.base(x)
        return self.T_inv @ A @ self.T_inv.T


def parse_field(text, **kw):
    """CLI coefficient names: identity | w21 | bmo | holder:beta | smooth."""
    from . import counterexamples as ce

    name, _, arg = text.partition(":")
    if name == "identity":
        return identity_field()
    if name == "holder":
        return HolderField(beta=float(arg or 0.5), **kw)
    if name == "smooth":
        return SmoothRadialField(float(arg or 0.25))
    if name == "w21":
        return ce.coefficient_field(ce.W21Params(**kw).alpha_profile(), 2, name="w21")
    if name == "bmo":
        return ce.coefficient_field(ce.BMOParams(**kw).alpha_profile(), 2, name="bmo")
    raise ValueError(f"unknown coefficient {text!r}")

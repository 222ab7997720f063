"""Moduli of continuity: evaluation, Dini classification, regularization.

A modulus is described by a :class:`ModulusSpec`.  The built-in kinds are

``power``        theta(t) = scale * t**beta
``log_inverse``  theta(t) = c / (1 + |log t|)
``log_power``    theta(t) = (log(e/t))**(-gamma)
``tabulated``    piecewise-linear interpolation of monotone samples

All integrals of the form  int theta(t)/t dt  are computed in the variable
u = log(1/t), where the 1/t singularity disappears.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import AccuracyError, DomainError, PreconditionError
from .tails import CONVERGENT, TailTest, classify_increments

LOG2 = math.log(2.0)
KINDS = ("power", "log_inverse", "log_power", "tabulated")


@dataclass(frozen=True)
class ModulusSpec:
    kind: str
    params: dict = field(default_factory=dict)
    domain_upper: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown modulus kind {self.kind!r}")
        p = dict(self.params)
        if self.kind == "power":
            p.setdefault("scale", 1.0)
            if p["beta"] <= 0 or p["scale"] < 0:
                raise ValueError("power modulus needs beta > 0 and scale >= 0")
        elif self.kind == "log_inverse":
            p.setdefault("c", 1.0)
        elif self.kind == "log_power":
            if p["gamma"] <= 0:
                raise ValueError("log_power modulus needs gamma > 0")
        else:
            t = np.asarray(p["t"], dtype=float)
            th = np.asarray(p["theta"], dtype=float)
            if t.ndim != 1 or t.shape != th.shape or len(t) < 2:
                raise ValueError("tabulated modulus needs matching 1-D samples")
            if np.any(np.diff(t) <= 0):
                raise ValueError("tabulated abscissae must be strictly increasing")
            if np.any(th < 0) or np.any(np.diff(th) < 0):
                raise ValueError("tabulated modulus must be non-negative and non-decreasing")
            if t[0] > 0:
                t = np.concatenate([[0.0], t])
                th = np.concatenate([[0.0], th])
            elif th[0] != 0:
                raise ValueError("a modulus vanishes at t = 0")
            p["t"], p["theta"] = t, th
        object.__setattr__(self, "params", p)

    # convenience constructors
    @classmethod
    def power(cls, beta, scale=1.0):
        return cls("power", {"beta": beta, "scale": scale})

    @classmethod
    def log_inverse(cls, c=1.0):
        return cls("log_inverse", {"c": c})

    @classmethod
    def log_power(cls, gamma):
        return cls("log_power", {"gamma": gamma})

    @classmethod
    def tabulated(cls, t, theta):
        return cls("tabulated", {"t": t, "theta": theta})

    @property
    def key(self):
        items = []
        for k in sorted(self.params):
            v = self.params[k]
            items.append((k, np.asarray(v).tobytes() if isinstance(v, np.ndarray) else v))
        return (self.kind, tuple(items), self.domain_upper)

    @property
    def smallest_sample(self):
        """Smallest positive abscissa where the modulus is actually known."""
        if self.kind == "tabulated":
            return float(self.params["t"][1])
        return 0.0

    def to_json(self):
        params = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return json.dumps({"kind": self.kind, "params": params, "domain_upper": self.domain_upper},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(obj["kind"], obj.get("params", {}), obj.get("domain_upper", 1.0))

    @classmethod
    def parse(cls, text):
        """Parse the CLI shorthand ``holder:0.5``, ``power:0.5``, ``log_inverse:1``,
        ``log_power:2`` or a JSON object."""
        text = text.strip()
        if text.startswith("{"):
            return cls.from_json(text)
        name, _, arg = text.partition(":")
        if name in ("holder", "power"):
            return cls.power(float(arg or 1.0))
        if name == "log_inverse":
            return cls.log_inverse(float(arg or 1.0))
        if name == "log_power":
            return cls.log_power(float(arg or 2.0))
        raise ValueError(f"cannot parse modulus {text!r}")


def _theta_of_u(spec, u):
    """theta(exp(-u)) for u >= 0, without forming tiny t where avoidable."""
    u = np.asarray(u, dtype=float)
    p = spec.params
    if spec.kind == "power":
        return p["scale"] * np.exp(-p["beta"] * u)
    if spec.kind == "log_inverse":
        return p["c"] / (1.0 + np.abs(u))
    if spec.kind == "log_power":
        return (1.0 + u) ** (-p["gamma"])
    return np.interp(np.exp(-u), p["t"], p["theta"])


def eval_modulus(spec: ModulusSpec, t):
    """theta(t) for 0 <= t <= domain_upper (vectorized)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > spec.domain_upper) or np.any(np.isnan(t_arr)):
        raise DomainError(f"modulus argument outside [0, {spec.domain_upper}]")
    p = spec.params
    with np.errstate(divide="ignore"):
        if spec.kind == "power":
            out = p["scale"] * t_arr ** p["beta"]
        elif spec.kind == "log_inverse":
            out = np.where(t_arr > 0, p["c"] / (1.0 + np.abs(np.log(t_arr))), 0.0)
        elif spec.kind == "log_power":
            out = np.where(t_arr > 0, (1.0 + np.log(1.0 / t_arr)) ** (-p["gamma"]), 0.0)
        else:
            out = np.interp(t_arr, p["t"], p["theta"])
    return float(out) if np.ndim(out) == 0 else out


def empirical_modulus(profile, t_min=1e-300, t_max=1.0, n=4000, value_at_zero=0.0):
    """Tabulated modulus of continuity at 0 of a radial profile.

    Uses the running maximum of |profile(s) - value_at_zero| over log-spaced
    samples, so the result is non-decreasing by construction.  ``profile`` is
    called with the log-radius u = log(1/s) when it has a ``of_log`` attribute
    (to reach radii below the float range of interest), else with s itself.
    """
    t = np.geomspace(t_min, t_max, n)
    if hasattr(profile, "of_log"):
        vals = np.abs(profile.of_log(np.log(1.0 / t)) - value_at_zero)
    else:
        vals = np.abs(np.asarray(profile(t), dtype=float) - value_at_zero)
    return ModulusSpec.tabulated(t, np.maximum.accumulate(vals))


# ---------------------------------------------------------------------------
# Dini integral


@dataclass
class DiniResult:
    partial_sums: list
    verdict: str
    total: float
    tail: object
    lower_cut: float


def _tabulated_integral(spec, a, b):
    """Exact int_a^b theta(t)/t dt for a piecewise-linear table."""
    t, th = spec.params["t"], spec.params["theta"]
    knots = np.concatenate([[a], t[(t > a) & (t < b)], [b]])
    vals = np.interp(knots, t, th)
    t1, t2 = knots[:-1], knots[1:]
    v1, v2 = vals[:-1], vals[1:]
    slope = (v2 - v1) / (t2 - t1)
    intercept = v1 - slope * t1
    return float(np.sum(intercept * np.log(t2 / t1) + slope * (t2 - t1)))


def _u_integral(spec, u0, u1, rtol):
    """int_{u0}^{u1} theta(exp(-u)) du."""
    if spec.kind == "tabulated":
        return _tabulated_integral(spec, math.exp(-u1), math.exp(-u0)), 0.0
    val, err = integrate.quad(lambda u: float(_theta_of_u(spec, u)), u0, u1,
                              epsabs=0.0, epsrel=rtol, limit=200)
    if err > max(10 * rtol * abs(val), 1e-300):
        raise AccuracyError("Dini panel quadrature missed tolerance", achieved=err / max(abs(val), 1e-300),
                            estimate=val)
    return val, err


def dini_integral(spec: ModulusSpec, lower_cut=2.0 ** -200, test: TailTest | None = None,
                  rtol=1e-13) -> DiniResult:
    """Dyadic partial sums of int_{lower_cut}^1 theta(t)/t dt with a verdict.

    ``partial_sums[k]`` is the integral over [2^-(k+1), 2^-k] (the last panel
    is clipped at ``lower_cut``).
    """
    if not 0 < lower_cut < 1:
        raise PreconditionError("lower_cut must lie in (0, 1)")
    if spec.kind == "tabulated" and lower_cut < spec.smallest_sample * (1 - 1e-12):
        raise PreconditionError("lower_cut below the smallest tabulated sample")
    u_cut = math.log(1.0 / lower_cut)
    n_levels = int(math.ceil(u_cut / LOG2 - 1e-12))
    sums = []
    for k in range(n_levels):
        u0, u1 = k * LOG2, min((k + 1) * LOG2, u_cut)
        sums.append(_u_integral(spec, u0, u1, rtol)[0])
    sums = np.asarray(sums)
    levels = np.arange(n_levels)
    # a clipped last panel would distort the tail fit
    fit_levels, fit_sums = (levels[:-1], sums[:-1]) if (n_levels * LOG2 - u_cut) > 1e-12 else (levels, sums)
    with np.errstate(divide="ignore"):
        tail = classify_increments(fit_levels, np.log(fit_sums), test)
    return DiniResult(list(map(float, sums)), tail.verdict, float(math.fsum(sums)), tail, lower_cut)


@lru_cache(maxsize=256)
def _dini_verdict_cached(key, spec_json):
    return dini_integral(ModulusSpec.from_json(spec_json)).verdict


def is_dini(spec: ModulusSpec) -> bool:
    if spec.kind == "tabulated":
        cut = max(spec.smallest_sample, 2.0 ** -200)
        return dini_integral(spec, lower_cut=cut).verdict == CONVERGENT
    return _dini_verdict_cached(spec.key, spec.to_json()) == CONVERGENT


# ---------------------------------------------------------------------------
# doubling and regularization


def check_doubling(spec: ModulusSpec, n_samples=1000, tol=1e-12, t_min=1e-12) -> bool:
    """True iff theta(2t) <= 2 theta(t) (1 + tol) at log-spaced t in (0, 1/2)."""
    if n_samples < 2:
        raise PreconditionError("n_samples must be >= 2")
    lo = max(t_min, spec.smallest_sample)
    t = np.geomspace(lo, 0.5 * (1 - 1e-12), n_samples)
    return bool(np.all(eval_modulus(spec, 2 * t) <= 2 * eval_modulus(spec, t) * (1 + tol) + 1e-300))


class RegularizedModulus:
    """theta~(t) = t * sup_{tau in [t, 1]} theta(tau)/tau on a log grid.

    Built by :func:`regularize`; callable on arrays.
    """

    def __init__(self, spec, n_grid, t_min):
        self.spec = spec
        self.t_min = t_min
        self.grid = np.geomspace(t_min, 1.0, n_grid)
        ratio = eval_modulus(spec, self.grid) / self.grid
        self.suffix_sup = np.maximum.accumulate(ratio[::-1])[::-1]

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr <= 0) or np.any(t_arr > 1):
            raise DomainError("regularized modulus defined on (0, 1]")
        idx = np.searchsorted(self.grid, t_arr * (1 - 1e-15), side="left")
        idx = np.minimum(idx, len(self.grid) - 1)
        sup = np.maximum(self.suffix_sup[idx], eval_modulus(self.spec, t_arr) / t_arr)
        out = t_arr * sup
        return float(out[0]) if np.ndim(t) == 0 else out


def regularize(spec: ModulusSpec, tol=1e-10, t_min=1e-12, max_grid=2 ** 20) -> RegularizedModulus:
    """Dominating modulus theta~ with theta~(t)/t non-increasing."""
    if not is_dini(spec):
        raise PreconditionError("regularize needs a Dini modulus (divergent Dini integral)")
    t_min = max(t_min, spec.smallest_sample)
    probe = np.geomspace(t_min, 1.0, 997)
    n = 1025
    prev = RegularizedModulus(spec, n, t_min)
    while n < max_grid:
        n = 2 * n - 1
        cur = RegularizedModulus(spec, n, t_min)
        a, b = prev(probe), cur(probe)
        if np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)) <= tol:
            return cur
        prev = cur
    return prev


# ---------------------------------------------------------------------------
# omega and sigma


def eval_omega(spec: ModulusSpec, t):
    t_arr = np.asarray(t, dtype=float)
    return t_arr ** 2 + eval_modulus(spec, t_arr)


def _sigma_scalar(spec, t, quad_tol):
    u_t = math.log(1.0 / t)
    if spec.kind == "tabulated":
        lo = spec.smallest_sample
        if t <= lo:
            i1 = float(eval_modulus(spec, t))  # linear piece through the origin
        else:
            i1 = _tabulated_integral(spec, lo, t) + float(eval_modulus(spec, lo))
        e1 = 0.0
    else:
        i1, e1 = integrate.quad(lambda u: float(_theta_of_u(spec, u)), u_t, np.inf,
                                epsabs=0.0, epsrel=quad_tol, limit=400)
    # int_t^1 theta(s)/s^2 ds  with s = exp(-u)
    if u_t > 0:
        i2, e2 = integrate.quad(lambda u: float(_theta_of_u(spec, u)) * math.exp(u), 0.0, u_t,
                                epsabs=0.0, epsrel=quad_tol, limit=400)
    else:
        i2, e2 = 0.0, 0.0
    if e1 > 10 * quad_tol * max(abs(i1), 1e-300) + 1e-300 or e2 > 10 * quad_tol * max(abs(i2), 1e-300) + 1e-300:
        raise AccuracyError("sigma quadrature missed tolerance", achieved=max(e1, e2))
    return t * t / 2 + i1 + t * ((1.0 - t) + i2) + t * t + float(eval_modulus(spec, t))


def eval_sigma(spec: ModulusSpec, t, quad_tol=1e-12):
    """sigma(t) = int_0^t omega(s)/s ds + t int_t^1 omega(s)/s^2 ds + omega(t)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0) or np.any(t_arr > 1):
        raise DomainError("sigma is defined on (0, 1]")
    if not is_dini(spec):
        raise PreconditionError("sigma needs a Dini modulus")
    out = np.vectorize(lambda s: _sigma_scalar(spec, float(s), quad_tol))(t_arr)
    return float(out) if out.ndim == 0 else out


@dataclass
class DerivedModuli:
    """omega, sigma and theta~ bundled for one modulus."""

    spec: ModulusSpec
    quad_tol: float = 1e-12

    def omega(self, t):
        return eval_omega(self.spec, t)

    def sigma(self, t):
        return eval_sigma(self.spec, t, self.quad_tol)

    def theta_tilde(self, t):
        return regularize(self.spec)(t)

    def omega_dini(self, delta):
        """int_0^delta omega(t)/t dt."""
        i1, _ = integrate.quad(lambda u: float(_theta_of_u(self.spec, u)), math.log(1 / delta), np.inf,
                               epsabs=0.0, epsrel=self.quad_tol, limit=400)
        return delta ** 2 / 2 + i1

"""Preconditioned Krylov solvers for the nonsymmetric stencil matrices.

ILU(0), BiCGStab and CG are written out with sequential loops (numba), so
every reduction runs in a fixed order and repeated solves are bit-identical.
GMRES delegates to scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import NonConvergenceError

METHODS = ("bicgstab", "gmres", "cg", "direct")
PRECONDITIONERS = ("none", "diagonal", "ilu0")


@dataclass(frozen=True)
class SolverConfig:
    """``cg`` is the symmetric-specialized path (needs a symmetric definite matrix);
    ``direct`` is a sparse LU factorization used as a reference."""

    method: str = "bicgstab"
    rel_tol: float = 1e-12
    max_iter: int = 20000
    preconditioner: str = "ilu0"
    restart: int = 60

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveStats:
    method: str
    iterations: int
    residual: float
    rhs_norm: float
    converged: bool

    @property
    def rel_residual(self):
        return self.residual / self.rhs_norm if self.rhs_norm > 0 else self.residual


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@numba.njit(cache=True)
def _matvec(indptr, indices, data, x, out):
    for i in range(indptr.shape[0] - 1):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        out[i] = s


@numba.njit(cache=True)
def _ilu0_factor(indptr, indices, data):
    """In-place ILU(0) on a copy of CSR data with sorted column indices.

    Returns (LU data, position of the diagonal in each row)."""
    n = indptr.shape[0] - 1
    lu = data.copy()
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            if indices[k] == i:
                diag[i] = k
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = k
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j >= i:
                break
            lu[k] /= lu[diag[j]]
            for kk in range(diag[j] + 1, indptr[j + 1]):
                p = pos[indices[kk]]
                if p >= 0:
                    lu[p] -= lu[k] * lu[kk]
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = -1
    return lu, diag


@numba.njit(cache=True)
def _ilu0_solve(indptr, indices, lu, diag, b, out):
    n = b.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(indptr[i], diag[i]):
            s -= lu[k] * out[indices[k]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(diag[i] + 1, indptr[i + 1]):
            s -= lu[k] * out[indices[k]]
        out[i] = s / lu[diag[i]]


class _Precond:
    def __init__(self, A, kind):
        self.kind = kind
        if kind == "diagonal":
            d = A.diagonal()
            if np.any(d == 0):
                raise ValueError("zero diagonal entry; diagonal preconditioner undefined")
            self.inv = 1.0 / d
        elif kind == "ilu0":
            self.ip, self.ix = A.indptr.astype(np.int64), A.indices.astype(np.int64)
            self.lu, self.diag = _ilu0_factor(self.ip, self.ix, A.data.astype(np.float64))
            if np.any(self.diag < 0):
                raise ValueError("ILU(0) needs a structurally nonzero diagonal")

    def __call__(self, r, out):
        if self.kind == "none":
            out[:] = r
        elif self.kind == "diagonal":
            np.multiply(self.inv, r, out=out)
        else:
            _ilu0_solve(self.ip, self.ix, self.lu, self.diag, r, out)
        return out


def _csr(A):
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


def bicgstab(A, b, x0=None, rel_tol=1e-10, max_iter=20000, preconditioner="ilu0"):
    """Right-preconditioned BiCGStab; the monitored residual is the true b - A x."""
    A = _csr(A)
    b = np.ascontiguousarray(b, dtype=float)
    n = len(b)
    ip, ix, data = A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data
    M = _Precond(A, preconditioner)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = np.empty(n)
    _matvec(ip, ix, data, x, r)
    r = b - r
    bnorm = np.sqrt(_dot(b, b))
    target = rel_tol * bnorm
    rn = np.sqrt(_dot(r, r))
    best_x, best_r = x.copy(), rn
    if rn <= target or bnorm == 0:
        return x, SolveStats("bicgstab", 0, rn, bnorm, True)
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    ph, sh, t = np.empty(n), np.empty(n), np.empty(n)
    for it in range(1, max_iter + 1):
        rho_new = _dot(rhat, r)
        if rho_new == 0.0:
            # breakdown: restart from the current iterate
            rhat = r.copy()
            rho_new = _dot(rhat, r)
            p[:] = 0.0
            v[:] = 0.0
            rho = alpha = omega = 1.0
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        M(p, ph)
        _matvec(ip, ix, data, ph, v)
        alpha = rho / _dot(rhat, v)
        s = r - alpha * v
        sn = np.sqrt(_dot(s, s))
        if sn <= target:
            x += alpha * ph
            return x, SolveStats("bicgstab", it, sn, bnorm, True)
        M(s, sh)
        _matvec(ip, ix, data, sh, t)
        tt = _dot(t, t)
        omega = _dot(t, s) / tt if tt > 0 else 0.0
        x += alpha * ph + omega * sh
        r = s - omega * t
        rn = np.sqrt(_dot(r, r))
        if rn < best_r:
            best_r, best_x = rn, x.copy()
        if rn <= target:
            return x, SolveStats("bicgstab", it, rn, bnorm, True)
        if omega == 0.0:
            break
    raise NonConvergenceError("BiCGStab did not reach the tolerance", best=best_x,
                              residual=best_r, iterations=it)


def cg(A, b, x0=None, rel_tol=1e-10, max_iter=20000, preconditioner="diagonal"):
    """Preconditioned conjugate gradients for symmetric definite A (either sign)."""
    A = _csr(A)
    sign = -1.0 if A.diagonal().mean() < 0 else 1.0
    As = A * sign if sign < 0 else A
    bs = np.ascontiguousarray(b, dtype=float) * sign
    ip, ix, data = As.indptr.astype(np.int64), As.indices.astype(np.int64), As.data
    if preconditioner == "ilu0":
        # ILU(0) is not symmetric; CG falls back to the diagonal
        preconditioner = "diagonal"
    M = _Precond(As, preconditioner)
    n = len(bs)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = np.empty(n)
    _matvec(ip, ix, data, x, r)
    r = bs - r
    bnorm = np.sqrt(_dot(bs, bs))
    target = rel_tol * bnorm
    z = M(r, np.empty(n))
    p = z.copy()
    rz = _dot(r, z)
    q = np.empty(n)
    rn = np.sqrt(_dot(r, r))
    if rn <= target or bnorm == 0:
        return x, SolveStats("cg", 0, rn, bnorm, True)
    for it in range(1, max_iter + 1):
        _matvec(ip, ix, data, p, q)
        a = rz / _dot(p, q)
        x += a * p
        r -= a * q
        rn = np.sqrt(_dot(r, r))
        if rn <= target:
            return x, SolveStats("cg", it, rn, bnorm, True)
        M(r, z)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergenceError("CG did not reach the tolerance", best=x, residual=rn, iterations=it)


def gmres(A, b, x0=None, rel_tol=1e-10, max_iter=20000, preconditioner="ilu0", restart=60):
    A = _csr(A)
    b = np.asarray(b, dtype=float)
    Mp = _Precond(A, preconditioner)
    n = len(b)
    M = spla.LinearOperator((n, n), matvec=lambda r: Mp(np.ascontiguousarray(r, dtype=float), np.empty(n)))
    count = [0]

    def cb(_):
        count[0] += 1

    x = None if x0 is None else np.asarray(x0, dtype=float)
    bn = float(np.linalg.norm(b))
    tol = rel_tol
    for _ in range(6):
        x, info = spla.gmres(A, b, x0=x, rtol=tol, atol=0.0, restart=restart,
                             maxiter=max(1, max_iter // restart), M=M, callback=cb,
                             callback_type="pr_norm")
        res = float(np.linalg.norm(b - A @ x))
        # scipy stops on the preconditioned residual; the contract is on the true one
        if res <= rel_tol * bn:
            return x, SolveStats("gmres", count[0], res, bn, True)
        if info > 0 or count[0] >= max_iter:
            break
        tol = tol * max(rel_tol * bn / res, 1e-3)
    raise NonConvergenceError("GMRES did not reach the tolerance", best=x, residual=res,
                              iterations=count[0])


def direct(A, b):
    A = sp.csc_matrix(A)
    x = spla.splu(A).solve(np.asarray(b, dtype=float))
    bn = float(np.linalg.norm(b))
    return x, SolveStats("direct", 1, float(np.linalg.norm(b - A @ x)), bn, True)


def solve_linear(A, b, cfg: SolverConfig | None = None, x0=None):
    cfg = cfg or SolverConfig()
    if cfg.method == "bicgstab":
        return bicgstab(A, b, x0, cfg.rel_tol, cfg.max_iter, cfg.preconditioner)
    if cfg.method == "cg":
        return cg(A, b, x0, cfg.rel_tol, cfg.max_iter, cfg.preconditioner)
    if cfg.method == "gmres":
        return gmres(A, b, x0, cfg.rel_tol, cfg.max_iter, cfg.preconditioner, cfg.restart)
    return direct(A, b)

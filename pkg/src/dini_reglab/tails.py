"""Operational convergence tests for series of dyadic increments.

No finite computation proves that a series diverges, so every verdict here is
a model-based classification of the last ``k_tail + 1`` increments.  The tail
is fitted, in log space, to

    log I_k = a + k log(rho) - s log(k + k0)

(geometric rate ``rho`` with a power-law correction of exponent ``s`` and
shift ``k0``).  The shift matters: the increments met in practice behave like
``(log R + k log 2)^(-s)``, i.e. a power law in ``k`` shifted by
``log R / log 2``.  ``k0`` is chosen by scanning a fixed grid (variable
projection), which keeps the fit deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVERGENT = "convergent"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"

_K0_GRID = np.concatenate([np.arange(1.0, 10.0, 0.05), np.arange(10.0, 40.0001, 0.25)])


@dataclass(frozen=True)
class TailTest:
    """Thresholds of the dyadic-increment test."""

    k_tail: int = 10
    r_max: float = 0.9
    flat_tol: float = 0.02
    s_divergent: float = 1.05
    s_convergent: float = 1.1


@dataclass
class DivergenceVerdict:
    levels: np.ndarray
    log_increments: np.ndarray
    fitted_ratio: float
    exponent: float
    verdict: str
    window: tuple = ()
    extras: dict = field(default_factory=dict)

    @property
    def increments(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_increments)

    @property
    def log_total(self):
        return float(np.logaddexp.reduce(self.log_increments))

    @property
    def total(self):
        return float(np.sum(self.increments))

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "fitted_ratio": self.fitted_ratio,
            "exponent": self.exponent,
            "window": list(self.window),
            "levels": [int(k) for k in self.levels],
            "log_increments": [float(v) for v in self.log_increments],
            **self.extras,
        }


def fit_tail(k, y):
    """Least-squares fit of ``y = a + k log(rho) - s log(k + k0)``.

    Returns ``(rho, s, k0, rms)``.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    best = None
    for k0 in _K0_GRID:
        X = np.column_stack([np.ones_like(k), k, -np.log(k + k0)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        rms = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
        # strict improvement only, so ties resolve to the smallest shift
        if best is None or rms < best[3] * (1 - 1e-9) - 1e-14:
            best = (float(np.exp(coef[1])), float(coef[2]), float(k0), rms)
    return best


def classify_increments(levels, log_increments, test: TailTest | None = None) -> DivergenceVerdict:
    """Classify a sequence of (log) dyadic increments."""
    test = test or TailTest()
    levels = np.asarray(levels)
    logs = np.asarray(log_increments, dtype=float)
    if len(logs) < test.k_tail + 1:
        raise ValueError(f"need at least {test.k_tail + 1} levels, got {len(logs)}")
    k = levels[-(test.k_tail + 1):].astype(float)
    y = logs[-(test.k_tail + 1):]
    window = (int(k[0]), int(k[-1]))
    if np.all(np.isneginf(y)):
        return DivergenceVerdict(levels, logs, 0.0, np.inf, CONVERGENT, window)
    if not np.all(np.isfinite(y)):
        return DivergenceVerdict(levels, logs, np.nan, np.nan, INCONCLUSIVE, window)
    rho, s, k0, rms = fit_tail(k, y)
    lr = np.log(rho)
    if lr > test.flat_tol:
        verdict = DIVERGENT
    elif rho <= test.r_max or lr < -test.flat_tol:
        verdict = CONVERGENT
    elif abs(lr) <= test.flat_tol:
        if s >= test.s_convergent:
            verdict = CONVERGENT
        elif s <= test.s_divergent:
            verdict = DIVERGENT
        else:
            verdict = INCONCLUSIVE
    else:
        verdict = INCONCLUSIVE
    return DivergenceVerdict(levels, logs, rho, s, verdict, window,
                             extras={"shift": k0, "fit_rms": rms})

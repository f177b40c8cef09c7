"""Exact recovery probability for dX = lam dt + dW with barrier at x = 2.

Two independent routes: adaptive quadrature of the first-passage density and
the closed-form inverse-Gaussian CDF.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr

from .fields import GridSpec, ProbabilityField

BARRIER = 2.0
QUAD_EPS = 1e-12
QUAD_TOL = 1e-8


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BenchmarkQuery:
    x: float
    T: float
    lam: float

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be nonnegative")


def _density(t, a, lam):
    return a / np.sqrt(2.0 * np.pi * t**3) * np.exp(-((a - lam * t) ** 2) / (2.0 * t))


def _mode(a: float, lam: float) -> float:
    # Mode of the first-passage density (inverse Gaussian; Levy for lam <= 0).
    if lam <= 0:
        return a * a / 3.0
    mean, shape = a / lam, a * a
    return mean * (math.sqrt(1.0 + (1.5 * mean / shape) ** 2) - 1.5 * mean / shape)


def analytic_recovery(q: BenchmarkQuery) -> float:
    """Integral of the first-passage density over (0, T]."""
    a = BARRIER - q.x
    if a <= 0:
        return 1.0
    if q.T == 0:
        return 0.0
    lo = min(QUAD_EPS, q.T)
    # (0, lo] carries at most ~Phi(-a/sqrt(lo)); taken from the closed form.
    head = closed_form_recovery(BenchmarkQuery(q.x, lo, q.lam))
    pts = [p for p in (_mode(a, q.lam),) if lo < p < q.T]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info, *_ = integrate.quad(
            _density, lo, q.T, args=(a, q.lam), epsabs=QUAD_TOL, epsrel=0.0,
            limit=500, points=pts or None, full_output=1,
        )
    if err > QUAD_TOL:
        raise QuadratureError(f"quadrature did not converge for {q}: est. error {err:.2e}")
    return float(min(1.0, max(0.0, val + head)))


def closed_form_recovery_array(x, T, lam):
    """Vectorised closed form; x >= 2 gives 1 and T = 0 gives 1(x >= 2)."""
    x, T, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, T, lam)))
    a = BARRIER - x
    out = np.where(a <= 0, 1.0, 0.0)
    m = (a > 0) & (T > 0)
    a, T, lam = a[m], T[m], lam[m]
    s = np.sqrt(T)
    first = ndtr((lam * T - a) / s)
    second = np.exp(2.0 * lam * a + log_ndtr(-(lam * T + a) / s))
    out[m] = first + second
    return np.clip(out, 0.0, 1.0)


def closed_form_recovery(q: BenchmarkQuery) -> float:
    return float(closed_form_recovery_array(q.x, q.T, q.lam))


def recovery_gradient_array(x, T, lam):
    """d/dx of the closed form for x < 2, T > 0; NaN elsewhere (not differentiable)."""
    x, T, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, T, lam)))
    out = np.full(x.shape, np.nan)
    m = (x < BARRIER) & (T > 0)
    a, T, lam = BARRIER - x[m], T[m], lam[m]
    s = np.sqrt(T)
    u1 = (lam * T - a) / s
    pdf = np.exp(-0.5 * u1 * u1) / math.sqrt(2.0 * math.pi)
    tail = np.exp(2.0 * lam * a + log_ndtr(-(lam * T + a) / s))
    out[m] = 2.0 * pdf / s - 2.0 * lam * tail
    return out


def analytic_field(grid: GridSpec, lam: float, kind: str = "N") -> ProbabilityField:
    """Exact N (recovery) or Q (= 1 - N) field of the benchmark."""
    X, T = grid.mesh()
    n = closed_form_recovery_array(X, T, lam)
    if kind == "N":
        values = n
    elif kind == "Q":
        values = 1.0 - n
    else:
        raise ValueError("the benchmark closed form covers kinds N and Q")
    return ProbabilityField(grid, values, kind, "ANALYTIC", float(lam))

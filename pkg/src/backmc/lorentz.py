"""Lorentz pitch-angle scattering benchmark with its Legendre-series solution.

The problem is ``df/dt = d/dx ((1 - x**2) df/dx)`` on ``[-1, 1]``.  Legendre
polynomials are its eigenfunctions (eigenvalue ``-l(l+1)``), so starting
from a peak at ``x0`` pre-smoothed for a time ``T0``,

    f(x, T) = sum_l (l + 1/2) P_l(x0) P_l(x) exp(-l(l+1)(T0 + T)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sde import DiffusionModel, lorentz_model


def legendre_eval(ell: int, x):
    """``P_ell(x)`` by the three-term recurrence; ``x`` may be an array."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return legendre_table(ell, x)[ell]


def legendre_table(max_ell: int, x) -> np.ndarray:
    """Rows ``P_0(x) .. P_max_ell(x)``, shape ``(max_ell + 1,) + shape(x)``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((max_ell + 1,) + x.shape)
    out[0] = 1.0
    if max_ell >= 1:
        out[1] = x
    for ell in range(1, max_ell):
        out[ell + 1] = ((2 * ell + 1) * x * out[ell] - ell * out[ell - 1]) / (ell + 1)
    return out


def term_bound(ell: int, T0: float) -> float:
    """Upper bound on the ``ell``-th series term over ``[-1, 1]`` (``|P_l| <= 1``)."""
    return (ell + 0.5) * math.exp(-ell * (ell + 1) * T0)


@dataclass(frozen=True)
class LegendreSeries:
    max_ell: int
    term_tolerance: float = 1e-12

    @classmethod
    def for_smoothing(cls, T0: float, term_tolerance: float = 1e-12, cap: int = 100_000) -> LegendreSeries:
        """Smallest truncation order whose term bound is below ``term_tolerance``."""
        if T0 <= 0:
            raise ValueError("T0 must be positive for the series to converge")
        ell = 0
        while term_bound(ell, T0) >= term_tolerance:
            ell += 1
            if ell > cap:
                raise ValueError(f"no truncation below {cap} terms for T0={T0!r}")
        return cls(max(ell, 1), term_tolerance)


@dataclass(frozen=True)
class LorentzProblem:
    x0: float = -0.9
    T0: float = 0.1
    model: DiffusionModel = field(default_factory=lorentz_model, compare=False)

    def __post_init__(self):
        if not -1.0 < self.x0 < 1.0:
            raise ValueError("x0 must lie in (-1, 1)")
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")

    def series(self, term_tolerance: float = 1e-12) -> LegendreSeries:
        return LegendreSeries.for_smoothing(self.T0, term_tolerance)

    def phi(self, series: LegendreSeries | None = None):
        """The initial condition as a vectorized callable for the solvers."""
        series = series or self.series()
        return lambda x: initial_condition(self, series, x)


def _check_x(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(x)) or np.any(np.abs(x) > 1.0):
        raise ValueError("x must lie in [-1, 1]")
    return x


def analytic_solution(problem: LorentzProblem, series: LegendreSeries, x, T: float = 0.0):
    """Truncated series at ``(x, T)``; scalar in, float out."""
    if T < 0:
        raise ValueError("T must be non-negative")
    x = _check_x(x)
    ells = np.arange(series.max_ell + 1)
    coef = (ells + 0.5) * legendre_table(series.max_ell, problem.x0) * np.exp(
        -ells * (ells + 1) * (problem.T0 + T)
    )
    table = legendre_table(series.max_ell, x)
    # term-by-term accumulation: each element's rounding is independent of the
    # array shape, so phi(x) on a batch matches phi(x) on a single point
    val = np.zeros(x.shape)
    for ell in range(series.max_ell + 1):
        val += coef[ell] * table[ell]
    return float(val) if val.ndim == 0 else val


def initial_condition(problem: LorentzProblem, series: LegendreSeries, x):
    return analytic_solution(problem, series, x, 0.0)

"""Error-scaling sweeps over N, N_bin and dt, and log-log slope fits.

Every sweep measures the local relative error at the initial peak location
``x0`` of the Lorentz benchmark against the Legendre-series solution,
averaged over ``n_repeats`` independent master seeds (``master_seed + r``).
"""
from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .backward import solve_backward
from .forward import Launch, eval_binned, solve_forward, std_error_binned
from .lorentz import LegendreSeries, LorentzProblem, analytic_solution
from .sde import Boundary, StepScheme, TimeGrid

log = logging.getLogger(__name__)


class SweepParameter(str, Enum):
    PARTICLES = "n"
    BINS = "n_bin"
    TIMESTEP = "dt"


class Method(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


def decade_ladder(lo: float, hi: float) -> list[float]:
    """The 1-2-5 sequence between ``lo`` and ``hi`` inclusive (both on the ladder)."""
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    out = []
    e = math.floor(math.log10(lo)) - 1
    while True:
        for m in (1, 2, 5):
            v = float(f"{m}e{e}")
            if v > hi * (1 + 1e-12):
                return out
            if v >= lo * (1 - 1e-12):
                out.append(v)
        e += 1


def int_ladder(lo: int, hi: int) -> list[int]:
    return [int(round(v)) for v in decade_ladder(lo, hi)]


_FIXED_DEFAULTS = {"n": 10_000, "n_bin": 20, "dt": 1e-4}


@dataclass(frozen=True)
class SweepSpec:
    """One parameter swept, the other two held in ``fixed``."""

    parameter: SweepParameter
    values: Sequence[float]
    fixed: Mapping[str, float] = field(default_factory=dict)
    T: float = 0.1
    x0: float = -0.9
    T0: float = 0.1
    x_query: float | None = None
    schemes: tuple[StepScheme, ...] = (StepScheme.LOW,)
    methods: tuple[Method, ...] = (Method.FORWARD, Method.BACKWARD)
    n_repeats: int = 8
    master_seed: int = 0
    boundary: Boundary = Boundary.REFLECT
    launch: Launch = Launch.GRID
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "parameter", SweepParameter(self.parameter))
        object.__setattr__(self, "schemes", tuple(StepScheme(s) for s in self.schemes))
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        vals = [float(v) for v in self.values]
        if not vals:
            raise ValueError("no sweep values")
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be positive and strictly increasing")
        if self.parameter.value in self.fixed:
            raise ValueError(f"swept parameter {self.parameter.value!r} also appears in fixed")
        unknown = set(self.fixed) - set(_FIXED_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown fixed parameters {sorted(unknown)}")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be positive")
        object.__setattr__(self, "values", tuple(vals))

    @property
    def query(self) -> float:
        return self.x0 if self.x_query is None else self.x_query

    def settings(self, value: float) -> dict[str, float]:
        s = {**_FIXED_DEFAULTS, **self.fixed, self.parameter.value: value}
        s["n"], s["n_bin"] = int(s["n"]), int(s["n_bin"])
        return s


@dataclass(frozen=True)
class SweepRow:
    param: float
    method: Method
    scheme: StepScheme
    epsilon: float
    std_error: float
    seconds: float
    n_saturated: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]

    def series(self, method, scheme) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(param, epsilon, std_error)`` for one method/scheme, failed rows dropped."""
        rows = [
            r for r in self.rows
            if r.method is Method(method) and r.scheme is StepScheme(scheme) and not r.failed
        ]
        return (
            np.array([r.param for r in rows]),
            np.array([r.epsilon for r in rows]),
            np.array([r.std_error for r in rows]),
        )

    def saturated(self, method, scheme) -> np.ndarray:
        return np.array([
            r.n_saturated > 0 for r in self.rows
            if r.method is Method(method) and r.scheme is StepScheme(scheme) and not r.failed
        ])

    @property
    def failures(self) -> list[SweepRow]:
        return [r for r in self.rows if r.failed]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    n_points_used: int
    excluded_indices: tuple[int, ...]

    def predict(self, param):
        return 10.0 ** (self.intercept + self.slope * np.log10(param))


def relative_error(estimate: float, exact: float) -> float:
    if not exact > 0:
        raise ValueError(f"exact value must be positive, got {exact!r}")
    return abs(estimate - exact) / exact


def saturation_exclusion(params: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Default rule: drop empty-bin saturation (``eps == 1``) and unusable points."""
    return ~np.isfinite(eps) | (eps <= 0) | np.isclose(eps, 1.0, rtol=0, atol=1e-12)


def fit_slope(
    points,
    exclusion: Callable[[np.ndarray, np.ndarray], np.ndarray] | np.ndarray | None = saturation_exclusion,
) -> SlopeFit:
    """Least squares on ``(log10 param, log10 eps)``.

    ``exclusion`` is either a rule ``(params, eps) -> bool mask`` or a boolean
    mask; ``True`` marks a dropped point.  Non-positive values are always
    dropped since they have no logarithm.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    params, eps = pts[:, 0], pts[:, 1]
    if exclusion is None:
        drop = np.zeros(len(pts), dtype=bool)
    elif callable(exclusion):
        drop = np.asarray(exclusion(params, eps), dtype=bool)
    else:
        drop = np.asarray(exclusion, dtype=bool)
    with np.errstate(invalid="ignore"):
        drop = drop | ~(eps > 0) | ~(params > 0) | ~np.isfinite(eps)
    keep = ~drop
    if keep.sum() < 2:
        raise ValueError(f"only {int(keep.sum())} point(s) left after exclusion; need 2")
    slope, intercept = np.polyfit(np.log10(params[keep]), np.log10(eps[keep]), 1)
    return SlopeFit(float(slope), float(intercept), int(keep.sum()), tuple(int(i) for i in np.flatnonzero(drop)))


def _one_estimate(method, scheme, settings, spec, problem, phi, seed, workers):
    grid = TimeGrid(spec.T, settings["dt"])
    x = spec.query
    if method is Method.BACKWARD:
        est = solve_backward(problem.model, phi, x, grid, scheme, settings["n"], seed, spec.boundary, workers)
        return est.value, est.std_error
    sol = solve_forward(
        problem.model, phi, grid, scheme, settings["n"], settings["n_bin"], seed, spec.boundary, spec.launch,
        workers,
    )
    return eval_binned(sol, x), std_error_binned(sol, x)


def run_sweep(
    spec: SweepSpec,
    problem: LorentzProblem | None = None,
    series: LegendreSeries | None = None,
    progress: Callable[[SweepRow], None] | None = None,
    workers: int = 1,
) -> SweepResult:
    """Run every (value, method, scheme) row of ``spec`` in a fixed order.

    ``std_error`` in a row is the single-run standard error relative to the
    exact value, averaged over repeats.  A row whose solves raise is
    recorded with ``error`` set and the sweep continues.
    """
    problem = problem or LorentzProblem(spec.x0, spec.T0)
    series = series or problem.series()
    phi = problem.phi(series)
    exact = analytic_solution(problem, series, spec.query, spec.T)
    rows = []
    for value in spec.values:
        settings = spec.settings(value)
        for method in spec.methods:
            for scheme in spec.schemes:
                t0 = time.perf_counter()
                try:
                    eps, rel_se, n_sat = [], [], 0
                    for r in range(spec.n_repeats):
                        est, se = _one_estimate(method, scheme, settings, spec, problem, phi, spec.master_seed + r, workers)
                        n_sat += est == 0.0
                        eps.append(relative_error(est, exact))
                        rel_se.append(se / exact)
                    row = SweepRow(
                        value, method, scheme, float(np.mean(eps)), float(np.mean(rel_se)),
                        time.perf_counter() - t0, int(n_sat),
                    )
                except (ArithmeticError, ValueError, RuntimeError) as exc:
                    log.warning("row %s=%g %s/%s failed: %s", spec.parameter.value, value, method.value, scheme.value, exc)
                    row = SweepRow(
                        value, method, scheme, math.nan, math.nan, time.perf_counter() - t0, 0, str(exc)
                    )
                rows.append(row)
                if progress is not None:
                    progress(row)
    return SweepResult(spec, rows)


# ---------------------------------------------------------------------------
# regime selection


def fit_method(result: SweepResult, method, scheme, mask: np.ndarray | None = None) -> SlopeFit:
    """Fit one column, excluding saturated rows and anything outside ``mask``."""
    p, e, _ = result.series(method, scheme)
    drop = result.saturated(method, scheme) | saturation_exclusion(p, e)
    if mask is not None:
        drop |= ~np.asarray(mask, dtype=bool)
    return fit_slope(np.column_stack([p, e]), drop)


def split_at_minimum(eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Masks for the points up to and from the error minimum (the minimum is in both)."""
    k = int(np.nanargmin(eps))
    idx = np.arange(len(eps))
    return idx <= k, idx >= k


def floor_mask(eps: np.ndarray, std_error: np.ndarray, params: np.ndarray, factor: float = 3.0) -> np.ndarray:
    """Points whose error exceeds ``factor`` times the statistical error at the smallest parameter."""
    floor = factor * std_error[int(np.argmin(params))]
    return eps > floor


def flattening_detected(params: np.ndarray, eps: np.ndarray, fit: SlopeFit, factor: float = 2.0) -> bool:
    """True when the smallest-parameter error sits well above the fitted power law."""
    k = int(np.argmin(params))
    return bool(eps[k] > factor * fit.predict(params[k]))


# ---------------------------------------------------------------------------
# presets matching the published experiments


def preset(kind: str, scale: str = "desk", scheme: StepScheme = StepScheme.LOW, master_seed: int = 0) -> SweepSpec:
    """Sweep specs for the N, N_bin and dt experiments.

    ``scale="paper"`` uses the published ranges with single runs; ``"desk"``
    trims the ranges and averages 8 seeds.
    """
    paper = scale == "paper"
    if scale not in ("desk", "paper"):
        raise ValueError("scale must be 'desk' or 'paper'")
    repeats = 1 if paper else 8
    if kind == "n":
        values = int_ladder(1, 10**6) if paper else int_ladder(10, 10**5)
        return SweepSpec(SweepParameter.PARTICLES, values, {"n_bin": 20, "dt": 1e-4},
                         schemes=(scheme,), n_repeats=repeats, master_seed=master_seed,
                         label="error vs N (N_bin=20, dt=1e-4)")
    if kind == "n_bin":
        values = int_ladder(1, 10**4) if paper else int_ladder(1, 10**3)
        return SweepSpec(SweepParameter.BINS, values, {"n": 10_000, "dt": 1e-4},
                         schemes=(scheme,), n_repeats=repeats, master_seed=master_seed,
                         label="error vs N_bin (N=1e4, dt=1e-4)")
    if kind == "dt":
        n = 2 * 10**5 if paper else 2 * 10**4
        if paper and StepScheme(scheme) is StepScheme.HIGH:
            n *= 10
        return SweepSpec(SweepParameter.TIMESTEP, decade_ladder(1e-5, 1e-1), {"n": n, "n_bin": 20},
                         schemes=(scheme,), n_repeats=repeats, master_seed=master_seed,
                         label=f"error vs dt ({StepScheme(scheme).value} order, N={n}, N_bin=20)")
    raise ValueError(f"unknown sweep kind {kind!r}")


@dataclass(frozen=True)
class FitRow:
    method: Method
    scheme: StepScheme
    regime: str
    fit: SlopeFit | None
    note: str = ""


def _try_fit(result, method, scheme, regime, mask=None) -> FitRow:
    try:
        return FitRow(method, scheme, regime, fit_method(result, method, scheme, mask))
    except ValueError as exc:
        return FitRow(method, scheme, regime, None, str(exc))


def fit_summary(result: SweepResult) -> list[FitRow]:
    """Slope fits with the regime rules appropriate to the swept parameter.

    * N: every non-saturated point.
    * N_bin: the forward column is split at its error minimum into a
      bin-size regime and a statistical regime; backward uses every point.
    * dt: each column is fitted where its error exceeds three times its own
      single-run statistical error at the smallest dt.  The forward column is
      also fitted over the backward column's range so both methods can be
      compared on the same dt values.
    """
    spec = result.spec
    rows = []
    for scheme in spec.schemes:
        if spec.parameter is SweepParameter.PARTICLES:
            for method in spec.methods:
                rows.append(_try_fit(result, method, scheme, "all"))
        elif spec.parameter is SweepParameter.BINS:
            for method in spec.methods:
                if method is Method.FORWARD:
                    _, e, _ = result.series(method, scheme)
                    if len(e) == 0:
                        continue
                    small, large = split_at_minimum(e)
                    rows.append(_try_fit(result, method, scheme, "small", small))
                    rows.append(_try_fit(result, method, scheme, "large", large))
                else:
                    rows.append(_try_fit(result, method, scheme, "all"))
        else:
            masks = {}
            for method in spec.methods:
                p, e, s = result.series(method, scheme)
                if len(p):
                    masks[method] = floor_mask(e, s, p)
                    rows.append(_try_fit(result, method, scheme, "pre-floor", masks[method]))
            if Method.FORWARD in masks and Method.BACKWARD in masks:
                pb, _, _ = result.series(Method.BACKWARD, scheme)
                pf, _, _ = result.series(Method.FORWARD, scheme)
                same = np.isin(pf, pb[masks[Method.BACKWARD]])
                rows.append(_try_fit(result, Method.FORWARD, scheme, "backward-range", same))
    return rows

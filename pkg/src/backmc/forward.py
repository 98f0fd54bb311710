"""Conventional forward, weighted Monte-Carlo solver.

Particles are launched over the whole domain carrying the weight
``phi(X(0))``, pushed forward in time, and deposited into a uniform
histogram.  The solution is read back by linear interpolation between bin
centers.

The histogram may cover only part of the domain (``bin_range``); particles
ending outside it are simply not deposited.  Besides the default midpoint
grid, launch points can be uniform random or drawn from the density of
``phi`` itself, in which case every particle carries the same weight.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import MASK64
from .sde import Boundary, DiffusionModel, StepScheme, TimeGrid, evolve_many


class Launch(str, Enum):
    GRID = "grid"
    UNIFORM = "uniform"
    DENSITY = "density"


# uniform launches draw from a stream that never collides with trajectory ids
_LAUNCH_STREAM = 0xFFFF_FFFF_FFFF_FFFF


@dataclass(frozen=True)
class BinnedSolution:
    """Histogram of particle weights.

    ``domain_width`` is the width ``b - a`` of the launch domain, which may
    exceed the span of ``edges`` when only a sub-range was binned.
    """

    edges: np.ndarray
    weight_sums: np.ndarray
    counts: np.ndarray
    n_particles: int
    domain_width: float
    weight_sq_sums: np.ndarray | None = None

    @property
    def n_bins(self) -> int:
        return len(self.weight_sums)

    @property
    def span(self) -> float:
        return float(self.edges[-1] - self.edges[0])

    @property
    def bin_width(self) -> float:
        return self.span / self.n_bins

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def _factor(self) -> float:
        # (b - a) / h; exactly n_bins when the whole domain is binned
        if self.span == self.domain_width:
            return float(self.n_bins)
        return self.n_bins * self.domain_width / self.span

    @property
    def estimates(self) -> np.ndarray:
        """Bin-center values ``(b - a) / (N h) * sum of weights``."""
        # multiplying before dividing keeps flat fields exact
        return self.weight_sums * self._factor / self.n_particles

    @property
    def _scale(self) -> float:
        return self._factor / self.n_particles

    @property
    def variances(self) -> np.ndarray:
        """Per-bin variance estimates, treating arrivals as independent Poisson events."""
        if self.weight_sq_sums is None:
            raise ValueError("solution was built without squared weight sums")
        return self.weight_sq_sums * self._scale**2


_DENSITY_CELLS = 1 << 16


def _launch_rng(master_seed: int) -> np.random.Generator:
    key = np.array([int(master_seed) & MASK64, _LAUNCH_STREAM], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _density_table(phi, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and cumulative trapezoid integral of ``phi`` on a fine grid."""
    x = np.linspace(lo, hi, _DENSITY_CELLS + 1)
    f = np.asarray(phi(x), dtype=np.float64)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("density launch needs a finite, non-negative phi")
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
    if not cdf[-1] > 0:
        raise ValueError("density launch needs phi with positive integral")
    return x, cdf


def launch_points(
    n_particles: int,
    domain: tuple[float, float],
    launch: Launch = Launch.GRID,
    master_seed: int = 0,
    phi=None,
) -> np.ndarray:
    """Launch positions.

    ``"grid"`` gives the midpoint grid ``lo + (i - 1/2)(hi - lo)/N``,
    ``"uniform"`` uniform random positions, and ``"density"`` positions
    drawn from the (piecewise-linear) density of ``phi`` by inverse-CDF
    sampling.  The random variants use a numpy Philox stream keyed by
    ``master_seed``, separate from every trajectory substream.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be positive")
    lo, hi = map(float, domain)
    launch = Launch(launch)
    if launch is Launch.UNIFORM:
        return _launch_rng(master_seed).uniform(lo, hi, n_particles)
    if launch is Launch.DENSITY:
        if phi is None:
            raise ValueError("density launch needs phi")
        x, cdf = _density_table(phi, lo, hi)
        return np.interp(_launch_rng(master_seed).uniform(0.0, cdf[-1], n_particles), cdf, x)
    i = np.arange(1, n_particles + 1, dtype=np.float64)
    return lo + (i - 0.5) * ((hi - lo) / n_particles)


def launch_weights(starts: np.ndarray, phi, domain: tuple[float, float], launch: Launch) -> np.ndarray:
    """Particle weights such that ``(b - a) / (N h) * sum of weights`` estimates ``f``.

    Grid and uniform launches carry ``phi(X(0))``.  Density launches carry
    the constant ``Z / (b - a)``, ``Z`` being the integral of ``phi``.
    """
    lo, hi = map(float, domain)
    if Launch(launch) is Launch.DENSITY:
        _, cdf = _density_table(phi, lo, hi)
        return np.full(starts.shape, cdf[-1] / (hi - lo))
    return np.ascontiguousarray(np.broadcast_to(np.asarray(phi(starts), dtype=np.float64), starts.shape))


def deposit(
    endpoints: np.ndarray,
    weights: np.ndarray,
    n_bins: int,
    bin_range: tuple[float, float],
    domain_width: float | None = None,
) -> BinnedSolution:
    """Histogram ``weights`` by ``endpoints`` into ``n_bins`` uniform bins over ``bin_range``.

    Bins are closed on the left; the right edge belongs to the last bin.
    Endpoints outside ``bin_range`` are not deposited but still count
    towards ``n_particles``.  ``domain_width`` defaults to the range width.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    lo, hi = map(float, bin_range)
    if not hi > lo:
        raise ValueError("empty bin range")
    endpoints = np.asarray(endpoints, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    inside = (endpoints >= lo) & (endpoints <= hi)
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.floor((endpoints[inside] - lo) * (n_bins / (hi - lo))).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    w = weights[inside]
    # bincount accumulates in array order, so the reduction is bit-stable
    weight_sums = np.bincount(idx, weights=w, minlength=n_bins).astype(np.float64)
    counts = np.bincount(idx, minlength=n_bins)
    sq = np.bincount(idx, weights=w * w, minlength=n_bins).astype(np.float64)
    width = hi - lo if domain_width is None else float(domain_width)
    return BinnedSolution(edges, weight_sums, counts, len(endpoints), width, sq)


def solve_forward(
    model: DiffusionModel,
    phi,
    grid: TimeGrid,
    scheme: StepScheme,
    n_particles: int,
    n_bins: int,
    master_seed: int,
    boundary: Boundary = Boundary.REFLECT,
    launch: Launch = Launch.GRID,
    workers: int = 1,
    bin_range: tuple[float, float] | None = None,
) -> BinnedSolution:
    """Forward weighted solve; particle ``i`` uses substream ``i``.

    ``bin_range`` restricts the histogram to a sub-interval of the domain
    (default: the whole domain).
    """
    if n_particles < 1 or n_bins < 1:
        raise ValueError("n_particles and n_bins must be positive")
    domain = (model.domain_lo, model.domain_hi)
    if bin_range is None:
        bin_range = domain
    elif not model.domain_lo <= bin_range[0] < bin_range[1] <= model.domain_hi:
        raise ValueError(f"bin_range {bin_range!r} must be a sub-interval of the domain")
    starts = launch_points(n_particles, domain, launch, master_seed, phi)
    weights = launch_weights(starts, phi, domain, launch)
    ends = evolve_many(
        starts, model, grid, scheme, master_seed, np.arange(n_particles), boundary, workers
    )
    return deposit(ends, weights, n_bins, bin_range, model.width)


def eval_binned(sol: BinnedSolution, x):
    """Linear interpolation of the bin-center estimates.

    Past the outermost centers the nearest center value is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = sol.edges[0], sol.edges[-1]
    if np.any(np.isnan(x)) or np.any((x < lo) | (x > hi)):
        raise ValueError("query outside the binned domain")
    val = np.interp(x, sol.centers, sol.estimates)
    return float(val) if val.ndim == 0 else val


def std_error_binned(sol: BinnedSolution, x: float) -> float:
    """Standard error of :func:`eval_binned` at ``x`` (bins taken as independent)."""
    c = sol.centers
    var = sol.variances
    if x <= c[0]:
        return float(np.sqrt(var[0]))
    if x >= c[-1]:
        return float(np.sqrt(var[-1]))
    k = int(np.searchsorted(c, x)) - 1
    a = (c[k + 1] - x) / (c[k + 1] - c[k])
    return float(np.sqrt(a * a * var[k] + (1 - a) ** 2 * var[k + 1]))

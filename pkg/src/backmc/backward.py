"""Backward (Feynman-Kac) Monte-Carlo solver.

All particles start at the query point at time ``T`` and are run back to
``t = 0``; the estimate is the plain average of the initial condition over
their endpoints.  No binning and no interpolation are involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sde import Boundary, DiffusionModel, StepScheme, TimeGrid, evolve_many


@dataclass(frozen=True)
class PointEstimate:
    x_query: float
    value: float
    std_error: float
    n_particles: int


def estimate_from_weights(x_query: float, weights: np.ndarray) -> PointEstimate:
    """Sample mean and standard error of ``weights`` (zero error for a constant sample)."""
    n = len(weights)
    if n == 0:
        raise ValueError("no weights")
    if np.all(weights == weights[0]):
        # summation round-off would otherwise perturb a constant sample
        return PointEstimate(float(x_query), float(weights[0]), 0.0, n)
    value = float(np.mean(weights))
    std_error = float(np.std(weights, ddof=1)) / math.sqrt(n)
    return PointEstimate(float(x_query), value, std_error, n)


def solve_backward(
    model: DiffusionModel,
    phi,
    x_query: float,
    grid: TimeGrid,
    scheme: StepScheme,
    n_particles: int,
    master_seed: int,
    boundary: Boundary = Boundary.REFLECT,
    workers: int = 1,
    substream_offset: int = 0,
) -> PointEstimate:
    """Estimate ``f(x_query, T)``; particle ``i`` uses substream ``substream_offset + i``."""
    if n_particles < 1:
        raise ValueError("n_particles must be positive")
    x_query = float(x_query)
    if math.isnan(x_query) or not model.contains(x_query):
        raise ValueError(f"x_query={x_query!r} outside the model domain")
    ids = substream_offset + np.arange(n_particles, dtype=np.int64)
    ends = evolve_many(x_query, model, grid, scheme, master_seed, ids, boundary, workers)
    weights = np.broadcast_to(np.asarray(phi(ends), dtype=np.float64), ends.shape)
    return estimate_from_weights(x_query, weights)


def solve_backward_grid(
    model: DiffusionModel,
    phi,
    x_queries,
    grid: TimeGrid,
    scheme: StepScheme,
    n_particles: int,
    master_seed: int,
    boundary: Boundary = Boundary.REFLECT,
    workers: int = 1,
) -> list[PointEstimate]:
    """Independent estimates per query; query ``j`` owns substreams ``j*N .. j*N + N - 1``."""
    xs = np.atleast_1d(np.asarray(x_queries, dtype=np.float64))
    return [
        solve_backward(
            model, phi, x, grid, scheme, n_particles, master_seed, boundary, workers,
            substream_offset=j * n_particles,
        )
        for j, x in enumerate(xs)
    ]

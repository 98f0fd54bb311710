"""Crank-Nicolson finite-volume solver used as an independent truth source.

Cell-centered grid, fluxes ``D (f[i+1] - f[i]) / dx`` on the faces, zero
flux through the two outer faces.  Each step solves the tridiagonal system
``(I - dt/2 A) f_new = (I + dt/2 A) f_old`` by Thomas elimination.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .sde import DiffusionModel


class LinearSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class FdGrid:
    lo: float
    hi: float
    dx: float
    dt_fd: float
    values: np.ndarray
    time: float = 0.0

    @property
    def n_cells(self) -> int:
        return len(self.values)

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n_cells) + 0.5) * self.dx

    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx)


@numba.njit(cache=True)
def _thomas(sub, diag, sup, rhs, cp, dp):
    """Solve a tridiagonal system; returns False on a vanishing pivot."""
    n = diag.shape[0]
    beta = diag[0]
    if beta == 0.0:
        return False
    cp[0] = sup[0] / beta
    dp[0] = rhs[0] / beta
    for i in range(1, n):
        beta = diag[i] - sub[i] * cp[i - 1]
        if beta == 0.0 or not np.isfinite(beta):
            return False
        cp[i] = sup[i] / beta
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return True


@numba.njit(cache=True)
def _cn_run(f, d_face, r, n_steps):
    """``n_steps`` Crank-Nicolson steps in place; ``r = dt / dx**2``."""
    n = f.shape[0]
    sub = np.empty(n)
    diag = np.empty(n)
    sup = np.empty(n)
    rhs = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    for i in range(n):
        left = d_face[i]
        right = d_face[i + 1]
        sub[i] = -0.5 * r * left
        sup[i] = -0.5 * r * right
        diag[i] = 1.0 + 0.5 * r * (left + right)
    for _ in range(n_steps):
        for i in range(n):
            flux_r = d_face[i + 1] * (f[i + 1] - f[i]) if i < n - 1 else 0.0
            flux_l = d_face[i] * (f[i] - f[i - 1]) if i > 0 else 0.0
            rhs[i] = f[i] + 0.5 * r * (flux_r - flux_l)
        if not _thomas(sub, diag, sup, rhs, cp, dp):
            return False
        for i in range(n):
            f[i] = dp[i]
    return True


def solve_fd(model: DiffusionModel, phi, T: float, n_cells: int, dt_fd: float) -> FdGrid:
    """Solution at time ``T`` from the initial condition ``phi`` sampled at cell centers.

    Raises
    ------
    LinearSolveError
        If elimination meets a zero or non-finite pivot.
    """
    if n_cells < 2:
        raise ValueError("need at least two cells")
    if not dt_fd > 0 or T < 0:
        raise ValueError("dt_fd must be positive and T non-negative")
    n_steps = round(T / dt_fd)
    if abs(n_steps * dt_fd - T) > 1e-12 * max(T, dt_fd):
        raise ValueError(f"T={T!r} is not an integer multiple of dt_fd={dt_fd!r}")
    lo, hi = model.domain_lo, model.domain_hi
    dx = (hi - lo) / n_cells
    centers = lo + (np.arange(n_cells) + 0.5) * dx
    f = np.array(np.broadcast_to(np.asarray(phi(centers), dtype=np.float64), centers.shape))
    d_face = model.diffusion(lo + np.arange(n_cells + 1) * dx)
    d_face[0] = d_face[-1] = 0.0  # zero-flux walls
    if np.any(d_face < 0):
        raise ValueError("negative diffusion coefficient on the grid")
    if not _cn_run(f, d_face, dt_fd / dx**2, int(n_steps)):
        raise LinearSolveError("tridiagonal elimination hit a zero pivot")
    return FdGrid(lo, hi, dx, dt_fd, f, n_steps * dt_fd)


def eval_fd(grid: FdGrid, x):
    """Linear interpolation between cell centers (constant beyond the outer centers)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(x)) or np.any((x < grid.lo) | (x > grid.hi)):
        raise ValueError("query outside the grid domain")
    val = np.interp(x, grid.centers, grid.values)
    return float(val) if val.ndim == 0 else val


def step_fd(grid: FdGrid, model: DiffusionModel, n_steps: int = 1) -> FdGrid:
    """Advance an existing grid by ``n_steps`` steps of its own ``dt_fd``."""
    f = grid.values.copy()
    d_face = model.diffusion(grid.lo + np.arange(grid.n_cells + 1) * grid.dx)
    d_face[0] = d_face[-1] = 0.0
    if not _cn_run(f, d_face, grid.dt_fd / grid.dx**2, int(n_steps)):
        raise LinearSolveError("tridiagonal elimination hit a zero pivot")
    return FdGrid(grid.lo, grid.hi, grid.dx, grid.dt_fd, f, grid.time + n_steps * grid.dt_fd)


__all__ = ["FdGrid", "LinearSolveError", "eval_fd", "solve_fd", "step_fd"]

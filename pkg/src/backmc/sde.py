"""Diffusion models and the stochastic equations of motion shared by both solvers.

The forward and backward methods use one and the same step kernel.  Time
direction is bookkeeping only: a backward trajectory started at the query
point and iterated ``n_steps`` times is exactly a forward trajectory of the
same stochastic difference equation.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np
from numba.core.registry import CPUDispatcher

from .rng import MASK64, RandomStream, normal_block

__all__ = [
    "Boundary",
    "DiffusionModel",
    "StepScheme",
    "StepTooLargeError",
    "TimeGrid",
    "apply_boundary",
    "evolve_many",
    "evolve_trajectory",
    "lorentz_model",
    "constant_model",
    "step_high",
    "step_low",
    "wiener_integral_errors",
    "wiener_integral_statistic",
]


class StepTooLargeError(RuntimeError):
    """A step overshot the domain by more than one reflection can repair."""


class StepScheme(str, Enum):
    LOW = "low"
    HIGH = "high"


class Boundary(str, Enum):
    REFLECT = "reflect"
    CLAMP = "clamp"


_REFLECT = 0
_CLAMP = 1


def _jit(fn: Callable) -> CPUDispatcher:
    if isinstance(fn, CPUDispatcher):
        return fn
    return numba.njit(fn)


@numba.njit
def _map(fn, x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = fn(x[i])
    return out


@dataclass(frozen=True)
class DiffusionModel:
    """Coefficients of ``df/dt = d/dx (D df/dx)`` on ``[domain_lo, domain_hi]``.

    ``D`` and ``mu`` are scalar functions; they are compiled with numba on
    construction so the trajectory kernels can call them.  ``mu`` must be
    ``dD/dx``.  ``sigma = sqrt(2 D)`` is derived, and since the equation has
    no advection term ``sigma * sigma' = mu``, which is all the higher-order
    step needs.
    """

    D: Callable[[float], float]
    mu: Callable[[float], float]
    domain_lo: float = -1.0
    domain_hi: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not self.domain_hi > self.domain_lo:
            raise ValueError("domain_hi must exceed domain_lo")
        object.__setattr__(self, "D", _jit(self.D))
        object.__setattr__(self, "mu", _jit(self.mu))

    @property
    def width(self) -> float:
        return self.domain_hi - self.domain_lo

    def _eval(self, fn, x):
        if np.ndim(x) == 0:
            return float(fn(float(x)))
        arr = np.ascontiguousarray(x, dtype=np.float64)
        return _map(fn, arr.ravel()).reshape(arr.shape)

    def diffusion(self, x):
        """``D`` evaluated on a scalar or array."""
        return self._eval(self.D, x)

    def drift(self, x):
        """``mu`` evaluated on a scalar or array."""
        return self._eval(self.mu, x)

    def sigma(self, x):
        # negative round-off in D at the domain edge is clipped
        return np.sqrt(2.0 * np.maximum(self.diffusion(x), 0.0))

    def dsigma(self, x):
        """``sigma'`` from the identity ``sigma sigma' = mu`` (zero where sigma vanishes)."""
        s = self.sigma(x)
        m = self.drift(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s > 0, m / np.where(s > 0, s, 1.0), 0.0)

    def contains(self, x: float) -> bool:
        return self.domain_lo <= x <= self.domain_hi


@numba.njit(cache=True)
def _lorentz_D(x):
    return (1.0 + x) * (1.0 - x)


@numba.njit(cache=True)
def _lorentz_mu(x):
    return -2.0 * x


def lorentz_model() -> DiffusionModel:
    """Pitch-angle scattering: ``D = (1 + x)(1 - x)`` on ``[-1, 1]``."""
    return DiffusionModel(_lorentz_D, _lorentz_mu, -1.0, 1.0, name="lorentz")


def constant_model(c: float, lo: float = -1.0, hi: float = 1.0) -> DiffusionModel:
    c = float(c)
    if c < 0:
        raise ValueError("diffusion coefficient must be non-negative")
    return DiffusionModel(lambda x: c, lambda x: 0.0, lo, hi, name=f"constant({c!r})")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid; ``horizon_T`` must be an integer multiple of ``dt``.

    A zero horizon is allowed and gives zero steps.
    """

    horizon_T: float
    dt: float
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (self.horizon_T >= 0 and math.isfinite(self.horizon_T)):
            raise ValueError(f"horizon_T must be non-negative, got {self.horizon_T!r}")
        n = round(self.horizon_T / self.dt)
        if abs(n * self.dt - self.horizon_T) > 1e-12 * max(self.horizon_T, self.dt):
            raise ValueError(
                f"horizon {self.horizon_T!r} is not an integer multiple of dt={self.dt!r}"
            )
        object.__setattr__(self, "n_steps", int(n))


# ---------------------------------------------------------------------------
# step kernels


@numba.njit(cache=True)
def _step(x, mu_x, sigma_x, dt, sqrt_dt, zeta, high):
    low = x + mu_x * dt + zeta * sigma_x * sqrt_dt
    if high:
        # written as low step plus correction so the two schemes coincide bit for bit
        return low + 0.5 * (zeta * zeta - 1.0) * mu_x * dt
    return low


@numba.njit(cache=True)
def _boundary(x, lo, hi, mode):
    """Boundary policy; NaN signals an overshoot one reflection cannot repair."""
    if x > hi:
        if mode == _CLAMP:
            return hi
        x = 2.0 * hi - x
        if x < lo:
            return np.nan
    elif x < lo:
        if mode == _CLAMP:
            return lo
        x = 2.0 * lo - x
        if x > hi:
            return np.nan
    return x


# Not disk-cached: the kernel is specialized on user-supplied coefficient
# functions, and it inlines the generator from another module, which numba's
# cache would not notice changing.
@numba.njit(nogil=True)
def _evolve_kernel(x_start, ids, k0, n_steps, dt, high, mode, lo, hi, D, mu, out):
    sqrt_dt = np.sqrt(dt)
    n_bad = 0
    for i in range(x_start.shape[0]):
        x = x_start[i]
        k1 = ids[i]
        z0 = z1 = z2 = z3 = 0.0
        for s in range(n_steps):
            j = s % 4
            if j == 0:
                z0, z1, z2, z3 = normal_block(np.uint64(s // 4), k0, k1)
                zeta = z0
            elif j == 1:
                zeta = z1
            elif j == 2:
                zeta = z2
            else:
                zeta = z3
            d = D(x)
            sig = np.sqrt(2.0 * d) if d > 0.0 else 0.0
            x = _boundary(_step(x, mu(x), sig, dt, sqrt_dt, zeta, high), lo, hi, mode)
            if np.isnan(x):
                n_bad += 1
                break
        out[i] = x
    return n_bad


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value):
        raise ValueError(f"{name} is NaN")
    return value


def step_low(x: float, model: DiffusionModel, dt: float, zeta: float) -> float:
    """Euler-type step ``x + mu dt + zeta sigma sqrt(dt)`` (no boundary handling)."""
    x = _check_finite("x", x)
    zeta = _check_finite("zeta", zeta)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not model.contains(x):
        raise ValueError(f"x={x!r} outside the model domain")
    return _step(x, model.drift(x), float(model.sigma(x)), dt, math.sqrt(dt), zeta, False)


def step_high(x: float, model: DiffusionModel, dt: float, zeta: float) -> float:
    """Higher-order step ``x + (1 + zeta**2) mu dt / 2 + zeta sigma sqrt(dt)``.

    It is evaluated as :func:`step_low` plus ``(zeta**2 - 1) mu dt / 2``, so
    that rearrangement holds exactly in floating point.

    The Ito correction ``sigma sigma' (zeta**2 - 1) dt / 2`` is folded into
    the drift using ``sigma sigma' = mu``; valid for advection-free models.
    """
    x = _check_finite("x", x)
    zeta = _check_finite("zeta", zeta)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not model.contains(x):
        raise ValueError(f"x={x!r} outside the model domain")
    return _step(x, model.drift(x), float(model.sigma(x)), dt, math.sqrt(dt), zeta, True)


def apply_boundary(x: float, model: DiffusionModel, boundary: Boundary = Boundary.REFLECT) -> float:
    """Map a post-step position back into the domain.

    Raises
    ------
    StepTooLargeError
        If the reflected point is still outside the domain.
    """
    mode = _CLAMP if Boundary(boundary) is Boundary.CLAMP else _REFLECT
    y = _boundary(float(x), model.domain_lo, model.domain_hi, mode)
    if math.isnan(y):
        raise StepTooLargeError(f"x={x!r} is more than one domain width outside")
    return y


def evolve_many(
    x_start,
    model: DiffusionModel,
    grid: TimeGrid,
    scheme: StepScheme,
    master_seed: int,
    substream_ids,
    boundary: Boundary = Boundary.REFLECT,
    workers: int = 1,
) -> np.ndarray:
    """Evolve a batch of trajectories and return their endpoints.

    Trajectory ``i`` starts at ``x_start[i]`` and draws its deviates from
    substream ``substream_ids[i]``.  The batch is split into ``workers``
    contiguous chunks run on threads; each endpoint depends only on its own
    inputs, so the result is bit-identical for every worker count.
    """
    ids = np.ascontiguousarray(np.asarray(substream_ids, dtype=np.int64).astype(np.uint64))
    x0 = np.ascontiguousarray(np.broadcast_to(np.asarray(x_start, dtype=np.float64), ids.shape))
    if np.any(np.isnan(x0)):
        raise ValueError("NaN start position")
    if np.any((x0 < model.domain_lo) | (x0 > model.domain_hi)):
        raise ValueError("start position outside the model domain")
    out = np.empty_like(x0)
    high = StepScheme(scheme) is StepScheme.HIGH
    mode = _CLAMP if Boundary(boundary) is Boundary.CLAMP else _REFLECT
    k0 = np.uint64(int(master_seed) & MASK64)

    def run(sl: slice) -> int:
        return _evolve_kernel(
            x0[sl], ids[sl], k0, grid.n_steps, grid.dt, high, mode,
            model.domain_lo, model.domain_hi, model.D, model.mu, out[sl],
        )

    n = x0.shape[0]
    workers = max(1, min(int(workers), n)) if n else 1
    bounds = np.linspace(0, n, workers + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        n_bad = run(slices[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            n_bad = sum(pool.map(run, slices))
    if n_bad:
        raise StepTooLargeError(
            f"{n_bad} trajectories overshot the domain by more than one reflection; reduce dt"
        )
    return out


def evolve_trajectory(
    x_start: float,
    model: DiffusionModel,
    grid: TimeGrid,
    scheme: StepScheme,
    stream: RandomStream,
    boundary: Boundary = Boundary.REFLECT,
) -> float:
    """Endpoint of one trajectory after ``grid.n_steps`` steps from ``x_start``."""
    x_start = _check_finite("x_start", x_start)
    return float(
        evolve_many([x_start], model, grid, scheme, stream.master_seed, [stream.substream_id], boundary)[0]
    )


# ---------------------------------------------------------------------------
# discrete Ito integral of W dW


@numba.njit
def _wiener_errors(k0, k1, t, n_part, n_samp, out):
    sqrt_h = np.sqrt(t / n_part)
    z0 = z1 = z2 = z3 = 0.0
    idx = 0
    for s in range(n_samp):
        w = 0.0
        ito = 0.0
        for _ in range(n_part):
            j = idx % 4
            if j == 0:
                z0, z1, z2, z3 = normal_block(np.uint64(idx // 4), k0, k1)
                zeta = z0
            elif j == 1:
                zeta = z1
            elif j == 2:
                zeta = z2
            else:
                zeta = z3
            idx += 1
            dw = zeta * sqrt_h
            ito += w * dw
            w += dw
        out[s] = ito - 0.5 * (w * w - t)
    return out


def wiener_integral_errors(t: float, n_partitions: int, n_samples: int, stream: RandomStream) -> np.ndarray:
    """Per-path ``I_n - (W(t)**2 - t) / 2``.

    ``I_n`` is the left-point (Ito) sum ``sum_k W(t_k) (W(t_{k+1}) - W(t_k))``
    on ``n_partitions`` equal subintervals.  Path ``s`` consumes deviates
    ``s * n_partitions`` onwards of ``stream``.
    """
    if n_partitions < 1 or n_samples < 1:
        raise ValueError("n_partitions and n_samples must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.zeros(n_samples)
    k0, k1 = stream.key
    return _wiener_errors(k0, k1, float(t), int(n_partitions), int(n_samples), np.empty(n_samples))


def wiener_integral_statistic(
    t: float, n_partitions: int, n_samples: int, stream: RandomStream
) -> tuple[float, float]:
    """``(mean, rms)`` of :func:`wiener_integral_errors`."""
    err = wiener_integral_errors(t, n_partitions, n_samples, stream)
    return float(err.mean()), float(np.sqrt(np.mean(err * err)))

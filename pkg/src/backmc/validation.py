"""Self-checks behind ``backmc validate``: each solver against an independent route."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lorentz import LorentzProblem, analytic_solution
from .oracle import solve_fd
from .rng import RandomStream
from .sde import lorentz_model, step_high, step_low, wiener_integral_errors


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def check_analytic_vs_fd(n_cells: int = 2000, dt_fd: float = 1e-5, tol: float = 1e-4) -> Check:
    problem = LorentzProblem(-0.9, 0.1)
    series = problem.series()
    grid = solve_fd(problem.model, problem.phi(series), 0.1, n_cells, dt_fd)
    exact = analytic_solution(problem, series, grid.centers, 0.1)
    dev = float(np.max(np.abs(grid.values - exact) / exact))
    return Check("analytic_vs_fd", dev < tol, f"max relative deviation {dev:.3e} (< {tol:g})")


def check_wiener_identity(seed: int = 2024) -> Check:
    stream = RandomStream(seed, 0)
    err = wiener_integral_errors(1.0, 1024, 10_000, stream)
    sem = float(np.std(err, ddof=1)) / math.sqrt(len(err))
    mean = float(np.mean(err))
    rms_coarse = math.sqrt(np.mean(wiener_integral_errors(1.0, 64, 10_000, stream) ** 2))
    rms_fine = math.sqrt(np.mean(wiener_integral_errors(1.0, 4096, 10_000, stream) ** 2))
    ok = abs(mean) < 3 * sem and rms_fine < rms_coarse
    return Check(
        "wiener_integral",
        ok,
        f"|mean| {abs(mean):.2e} < 3 sem {3 * sem:.2e}; rms 64 -> 4096: {rms_coarse:.3e} -> {rms_fine:.3e}",
    )


def check_gaussian_moments(seed: int = 7) -> Check:
    z = RandomStream(seed, 1).normals(10**6)
    m, v = float(z.mean()), float(z.var())
    ok = abs(m) < 5e-3 and abs(v - 1) < 5e-3
    return Check("gaussian_moments", ok, f"mean {m:+.2e}, variance - 1 {v - 1:+.2e}")


def check_normalization(tol: float = 1e-8) -> Check:
    problem = LorentzProblem(-0.9, 0.1)
    series = problem.series()
    nodes, weights = np.polynomial.legendre.leggauss(64)
    worst = max(
        abs(float(weights @ analytic_solution(problem, series, nodes, T)) - 1.0) for T in (0.0, 0.1, 1.0)
    )
    return Check("series_normalization", worst < tol, f"max |integral - 1| {worst:.2e}")


def check_scheme_coincidence() -> Check:
    model = lorentz_model()
    rng = np.random.default_rng(0)
    worst = 0.0
    for x, z in zip(rng.uniform(-1, 1, 200), rng.standard_normal(200)):
        dt = 1e-3
        lhs = step_high(x, model, dt, z)
        rhs = step_low(x, model, dt, z) + 0.5 * (z * z - 1) * model.drift(x) * dt
        worst = max(worst, abs(lhs - rhs))
    return Check("scheme_coincidence", worst == 0.0, f"max discrepancy {worst:.1e}")


def run_checks() -> list[Check]:
    return [
        check_analytic_vs_fd(),
        check_wiener_identity(),
        check_gaussian_moments(),
        check_normalization(),
        check_scheme_coincidence(),
    ]

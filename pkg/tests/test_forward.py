from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import smooth_phi

from backmc.forward import (
    BinnedSolution,
    Launch,
    deposit,
    eval_binned,
    launch_points,
    launch_weights,
    solve_forward,
    std_error_binned,
)
from backmc.lorentz import analytic_solution
from backmc.sde import StepScheme, TimeGrid, lorentz_model

LORENTZ = lorentz_model()


def test_launch_points_examples():
    assert np.array_equal(launch_points(1, (-1, 1)), [0.0])
    assert np.array_equal(launch_points(4, (-1, 1)), [-0.75, -0.25, 0.25, 0.75])
    assert np.array_equal(launch_points(2, (0, 1)), [0.25, 0.75])
    with pytest.raises(ValueError):
        launch_points(0, (-1, 1))


def test_uniform_launch_is_seeded():
    a = launch_points(1000, (-1, 1), Launch.UNIFORM, 5)
    assert np.array_equal(a, launch_points(1000, (-1, 1), "uniform", 5))
    assert not np.array_equal(a, launch_points(1000, (-1, 1), Launch.UNIFORM, 6))
    assert a.min() >= -1 and a.max() <= 1


def test_frozen_unit_weights_give_one(frozen_model):
    for n, n_bins in [(1000, 20), (1000, 1), (4096, 64)]:
        sol = solve_forward(frozen_model, lambda x: np.ones_like(x), TimeGrid(0.1, 1e-2), StepScheme.LOW,
                            n, n_bins, 0)
        assert np.all(sol.estimates == 1.0)


def test_deposit_conservation_and_empty_bins(phi):
    sol = solve_forward(LORENTZ, phi, TimeGrid(0.1, 1e-3), StepScheme.LOW, 20_000, 50, 3)
    launch_weights = phi(launch_points(20_000, (-1, 1)))
    assert sol.counts.sum() == sol.n_particles
    assert math.isclose(sol.weight_sums.sum(), launch_weights.sum(), rel_tol=1e-13)
    assert math.fsum(sol.weight_sums) == pytest.approx(math.fsum(launch_weights), rel=1e-14)
    assert np.all(sol.weight_sums[sol.counts == 0] == 0.0)


def test_deposit_edges():
    sol = deposit(np.array([-1.0, -0.5, 0.0, 1.0]), np.array([1.0, 2.0, 3.0, 4.0]), 4, (-1, 1))
    assert np.array_equal(sol.edges, [-1, -0.5, 0, 0.5, 1])
    # left-closed bins; the right wall belongs to the last bin
    assert np.array_equal(sol.counts, [1, 1, 1, 1])
    assert np.array_equal(sol.weight_sums, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        deposit(np.zeros(3), np.ones(3), 0, (-1, 1))


def test_zero_time_consistency_smooth_phi():
    sol = solve_forward(LORENTZ, smooth_phi, TimeGrid(0.0, 1e-3), StepScheme.LOW, 100_000, 20, 0)
    assert np.max(np.abs(sol.estimates - smooth_phi(sol.centers))) < 1e-2


def test_zero_time_error_shrinks_with_bins():
    errs = []
    for n_bins in (5, 10, 20, 40):
        sol = solve_forward(LORENTZ, smooth_phi, TimeGrid(0.0, 1e-3), StepScheme.LOW, 100_000, n_bins, 0)
        errs.append(np.max(np.abs(sol.estimates - smooth_phi(sol.centers))))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # bin-averaging error is second order in the bin width
    assert errs[0] / errs[-1] > 40


def test_normalization_drift(phi):
    n = 10_000
    assert abs(2.0 / n * phi(launch_points(n, (-1, 1))).sum() - 1.0) < 1e-3


def test_eval_binned_examples():
    sol = deposit(np.array([-0.9, -0.1, 0.1, 0.3]), np.array([1.0, 2.0, 3.0, 5.0]), 4, (-1, 1))
    c = sol.centers
    assert np.array_equal(c, [-0.75, -0.25, 0.25, 0.75])
    f = sol.estimates
    for k in range(4):
        assert eval_binned(sol, c[k]) == f[k]
    assert eval_binned(sol, 0.0) == pytest.approx(0.5 * (f[1] + f[2]), abs=1e-15)
    # constant extrapolation past the outer centers; the last bin is empty
    assert eval_binned(sol, -1.0) == f[0]
    assert eval_binned(sol, 1.0) == 0.0
    assert eval_binned(sol, 0.75) == 0.0
    with pytest.raises(ValueError):
        eval_binned(sol, 1.2)


def test_eval_binned_flat_field():
    sol = BinnedSolution(np.linspace(-1, 1, 11), np.full(10, 3.0), np.full(10, 2), 20, 2.0)
    expected = 2.0 / (20 * 0.2) * 3.0
    for x in np.linspace(-1, 1, 17):
        assert eval_binned(sol, x) == pytest.approx(expected, rel=1e-15)
    with pytest.raises(ValueError):
        sol.variances


def test_eval_binned_vectorized(phi):
    sol = solve_forward(LORENTZ, phi, TimeGrid(0.02, 1e-3), StepScheme.LOW, 5000, 20, 1)
    x = np.linspace(-1, 1, 33)
    assert np.array_equal(eval_binned(sol, x), [eval_binned(sol, v) for v in x])


def test_std_error_matches_seed_scatter(problem, series, phi):
    grid = TimeGrid(0.1, 1e-2)
    est, se = [], []
    for seed in range(40):
        sol = solve_forward(LORENTZ, phi, grid, StepScheme.LOW, 4000, 20, seed)
        est.append(eval_binned(sol, -0.9))
        se.append(std_error_binned(sol, -0.9))
    ratio = np.std(est, ddof=1) / np.mean(se)
    assert 0.5 < ratio < 1.5
    assert std_error_binned(sol, -1.0) == pytest.approx(math.sqrt(sol.variances[0]))


def test_forward_tracks_analytic(problem, series, phi):
    sol = solve_forward(LORENTZ, phi, TimeGrid(0.1, 1e-3), StepScheme.LOW, 100_000, 20, 0)
    exact = analytic_solution(problem, series, sol.centers, 0.1)
    interior = sol.centers < 0.5
    assert np.max(np.abs(sol.estimates - exact)[interior]) < 0.05


@pytest.mark.parametrize("scheme", list(StepScheme))
@pytest.mark.parametrize("launch", list(Launch))
def test_forward_independent_of_workers(phi, scheme, launch):
    args = (LORENTZ, phi, TimeGrid(0.05, 1e-3), scheme, 3000, 25, 17)
    ref = solve_forward(*args, launch=launch, workers=1)
    for w in (2, 8):
        other = solve_forward(*args, launch=launch, workers=w)
        assert np.array_equal(other.weight_sums, ref.weight_sums)
        assert np.array_equal(other.counts, ref.counts)
        assert np.array_equal(other.weight_sq_sums, ref.weight_sq_sums)


def test_density_launch_follows_phi(phi):
    pts = launch_points(200_000, (-1, 1), Launch.DENSITY, 3, phi)
    assert np.array_equal(pts, launch_points(200_000, (-1, 1), "density", 3, phi))
    w = launch_weights(pts, phi, (-1, 1), Launch.DENSITY)
    assert np.all(w == w[0]) and w[0] == pytest.approx(0.5, rel=1e-6)
    # the zero-time histogram of density launches reproduces the bin averages of phi
    sol = deposit(pts, w, 20, (-1, 1))
    fine = np.linspace(-1, 1, 20 * 1000 + 1)
    mids = 0.5 * (fine[1:] + fine[:-1])
    averages = phi(mids).reshape(20, 1000).mean(axis=1)
    head = slice(0, 10)
    assert np.allclose(sol.estimates[head], averages[head], rtol=0.1)
    with pytest.raises(ValueError):
        launch_points(10, (-1, 1), Launch.DENSITY)
    with pytest.raises(ValueError):
        launch_points(10, (-1, 1), Launch.DENSITY, 0, lambda x: -np.ones_like(x))


def test_bin_sub_range(phi):
    grid = TimeGrid(0.1, 1e-2)
    full = solve_forward(LORENTZ, phi, grid, StepScheme.LOW, 20_000, 20, 4)
    part = solve_forward(LORENTZ, phi, grid, StepScheme.LOW, 20_000, 5, 4, bin_range=(0.0, 0.5))
    # the sub-range bins coincide with bins 10..14 of the full histogram
    assert np.array_equal(part.counts, full.counts[10:15])
    assert np.array_equal(part.weight_sums, full.weight_sums[10:15])
    assert np.allclose(part.estimates, full.estimates[10:15], rtol=1e-14)
    assert part.counts.sum() < part.n_particles == 20_000
    with pytest.raises(ValueError):
        solve_forward(LORENTZ, phi, grid, StepScheme.LOW, 100, 5, 0, bin_range=(0.5, 1.5))


def test_density_launch_empties_the_tail(problem, series, phi):
    sol = solve_forward(LORENTZ, phi, TimeGrid(0.1, 1e-2), StepScheme.LOW, 200_000, 20, 0,
                        launch=Launch.DENSITY, bin_range=(0.98, 1.0))
    assert sol.counts[-1] == 0
    assert np.sum(sol.counts == 0) >= 10
    # grid launches keep the tail populated: the uniform density is the Lorentz equilibrium
    grid_sol = solve_forward(LORENTZ, phi, TimeGrid(0.1, 1e-2), StepScheme.LOW, 200_000, 20, 0,
                             bin_range=(0.98, 1.0))
    assert np.all(grid_sol.counts > 0)


def test_forward_rejects_bad_counts(phi):
    with pytest.raises(ValueError):
        solve_forward(LORENTZ, phi, TimeGrid(0.1, 1e-2), StepScheme.LOW, 100, 0, 0)

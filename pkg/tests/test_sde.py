from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backmc.rng import RandomStream
from backmc.sde import (
    Boundary,
    DiffusionModel,
    StepScheme,
    StepTooLargeError,
    TimeGrid,
    apply_boundary,
    constant_model,
    evolve_many,
    evolve_trajectory,
    lorentz_model,
    step_high,
    step_low,
    wiener_integral_errors,
    wiener_integral_statistic,
)

LORENTZ = lorentz_model()

# endpoint of one fixed trajectory (x_start=-0.9, dt=1e-3, T=0.1, seed 20240517,
# substream 0); frozen from the reference implementation
FIXTURE_LOW = -0.5789697096310065
FIXTURE_HIGH = -0.5655742397869232


# --------------------------------------------------------------------- model


def test_lorentz_coefficients():
    assert LORENTZ.diffusion(1.0) == 0.0
    assert LORENTZ.diffusion(-1.0) == 0.0
    assert LORENTZ.diffusion(0.0) == 1.0
    x = np.linspace(-0.99, 0.99, 41)
    h = 1e-6
    fd = (LORENTZ.diffusion(x + h) - LORENTZ.diffusion(x - h)) / (2 * h)
    assert np.allclose(LORENTZ.drift(x), -2 * x)
    assert np.allclose(LORENTZ.drift(x), fd, atol=1e-8)


def test_sigma_and_dsigma_identity():
    x = np.linspace(-0.95, 0.95, 21)
    assert np.allclose(LORENTZ.sigma(x), np.sqrt(2 * (1 - x * x)))
    assert np.allclose(LORENTZ.sigma(x) * LORENTZ.dsigma(x), LORENTZ.drift(x), rtol=1e-13, atol=1e-15)
    assert LORENTZ.dsigma(1.0) == 0.0


def test_model_rejects_empty_domain():
    with pytest.raises(ValueError):
        DiffusionModel(lambda x: 1.0, lambda x: 0.0, 1.0, 1.0)


def test_constant_model_rejects_negative():
    with pytest.raises(ValueError):
        constant_model(-1.0)


# --------------------------------------------------------------------- steps


def test_step_low_examples():
    assert step_low(0.3, constant_model(0.7), 0.05, 0.0) == 0.3
    assert step_low(0.0, LORENTZ, 0.01, 1.0) == pytest.approx(math.sqrt(2) * 0.1, rel=1e-15)
    assert step_low(0.5, LORENTZ, 0.01, 0.0) == pytest.approx(0.49, rel=1e-15)


def test_step_high_examples():
    assert step_high(0.5, LORENTZ, 0.01, 0.0) == pytest.approx(0.495, rel=1e-15)
    for x in (-0.7, 0.0, 0.31, 0.9):
        assert step_high(x, LORENTZ, 0.003, 1.0) == step_low(x, LORENTZ, 0.003, 1.0)


def test_step_high_mean_increment_is_drift():
    z = RandomStream(77, 0).normals(400_000)
    x, dt = 0.4, 0.01
    mu, sig = LORENTZ.drift(x), float(LORENTZ.sigma(x))
    inc = 0.5 * (1 + z * z) * mu * dt + z * sig * math.sqrt(dt)
    sem = inc.std() / math.sqrt(len(z))
    assert abs(inc.mean() - mu * dt) < 4 * sem
    # the scalar API agrees with the vectorized formula
    assert step_high(x, LORENTZ, dt, z[0]) - x == pytest.approx(inc[0], rel=1e-12)


@given(
    x=st.floats(min_value=-1.0, max_value=1.0),
    dt=st.floats(min_value=1e-7, max_value=0.1),
    zeta=st.floats(min_value=-6.0, max_value=6.0),
)
@settings(max_examples=300, deadline=None)
def test_scheme_coincidence(x, dt, zeta):
    lhs = step_high(x, LORENTZ, dt, zeta)
    rhs = step_low(x, LORENTZ, dt, zeta) + 0.5 * (zeta * zeta - 1.0) * LORENTZ.drift(x) * dt
    assert lhs == rhs


def test_step_rejects_bad_input():
    with pytest.raises(ValueError):
        step_low(float("nan"), LORENTZ, 0.01, 0.0)
    with pytest.raises(ValueError):
        step_low(0.0, LORENTZ, 0.0, 0.0)
    with pytest.raises(ValueError):
        step_high(1.5, LORENTZ, 0.01, 0.0)
    with pytest.raises(ValueError):
        step_high(0.0, LORENTZ, 0.01, float("nan"))


# ------------------------------------------------------------------ boundary


def test_apply_boundary_examples():
    assert apply_boundary(0.5, LORENTZ) == 0.5
    assert apply_boundary(1.02, LORENTZ) == pytest.approx(0.98, abs=1e-15)
    assert apply_boundary(-1.001, LORENTZ) == pytest.approx(-0.999, abs=1e-15)
    assert apply_boundary(1.0, LORENTZ) == 1.0


def test_apply_boundary_clamp():
    assert apply_boundary(1.02, LORENTZ, Boundary.CLAMP) == 1.0
    assert apply_boundary(-3.0, LORENTZ, "clamp") == -1.0


def test_apply_boundary_overshoot_errors():
    with pytest.raises(StepTooLargeError):
        apply_boundary(3.5, LORENTZ)


@given(x=st.floats(min_value=-2.999, max_value=2.999))
def test_single_reflection_lands_inside(x):
    y = apply_boundary(x, LORENTZ)
    assert -1.0 <= y <= 1.0


# ---------------------------------------------------------------- time grid


def test_time_grid():
    assert TimeGrid(0.1, 1e-3).n_steps == 100
    assert TimeGrid(0.1, 2e-5).n_steps == 5000
    assert TimeGrid(0.0, 1e-2).n_steps == 0
    with pytest.raises(ValueError):
        TimeGrid(0.1, 0.03)
    with pytest.raises(ValueError):
        TimeGrid(0.1, 0.0)
    with pytest.raises(ValueError):
        TimeGrid(-0.1, 0.01)


# ---------------------------------------------------------------- evolution


def test_frozen_model_keeps_start(frozen_model):
    grid = TimeGrid(0.1, 1e-3)
    for x in (-1.0, -0.3, 0.77):
        assert evolve_trajectory(x, frozen_model, grid, StepScheme.LOW, RandomStream(1, 2)) == x
        assert evolve_trajectory(x, frozen_model, grid, StepScheme.HIGH, RandomStream(1, 2)) == x


def test_regression_fixture():
    grid = TimeGrid(0.1, 1e-3)
    stream = RandomStream(20240517, 0)
    assert evolve_trajectory(-0.9, LORENTZ, grid, StepScheme.LOW, stream) == FIXTURE_LOW
    assert evolve_trajectory(-0.9, LORENTZ, grid, StepScheme.HIGH, stream) == FIXTURE_HIGH


def test_trajectory_replays_its_deviates():
    # a hand-rolled loop over the same deviates lands on the same endpoint
    grid = TimeGrid(0.05, 1e-3)
    stream = RandomStream(8, 13)
    z = stream.normals(grid.n_steps)
    x = 0.2
    for k in range(grid.n_steps):
        x = apply_boundary(step_low(x, LORENTZ, grid.dt, z[k]), LORENTZ)
    assert evolve_trajectory(0.2, LORENTZ, grid, StepScheme.LOW, stream) == pytest.approx(x, abs=1e-14)


def test_zero_steps_returns_start():
    assert evolve_trajectory(0.4, LORENTZ, TimeGrid(0.0, 1e-3), StepScheme.LOW, RandomStream(0)) == 0.4


@pytest.mark.parametrize("scheme", list(StepScheme))
def test_evolve_many_independent_of_workers(scheme):
    grid = TimeGrid(0.02, 1e-3)
    starts = np.linspace(-0.99, 0.99, 1001)
    ids = np.arange(1001)
    ref = evolve_many(starts, LORENTZ, grid, scheme, 99, ids, workers=1)
    for w in (2, 3, 8):
        assert np.array_equal(evolve_many(starts, LORENTZ, grid, scheme, 99, ids, workers=w), ref)
    # each trajectory is a pure function of its own inputs
    k = 517
    single = evolve_trajectory(starts[k], LORENTZ, grid, scheme, RandomStream(99, k))
    assert single == ref[k]


def test_evolve_stays_in_domain():
    grid = TimeGrid(0.1, 1e-2)
    ends = evolve_many(np.linspace(-1, 1, 5000), LORENTZ, grid, StepScheme.LOW, 3, np.arange(5000))
    assert ends.min() >= -1.0 and ends.max() <= 1.0


def test_oversized_step_is_reported():
    wide = constant_model(50.0)
    with pytest.raises(StepTooLargeError):
        evolve_many(np.zeros(200), wide, TimeGrid(1.0, 1.0), StepScheme.LOW, 0, np.arange(200))
    # clamping never fails
    ends = evolve_many(np.zeros(200), wide, TimeGrid(1.0, 1.0), StepScheme.LOW, 0, np.arange(200),
                       boundary=Boundary.CLAMP)
    assert np.all(np.abs(ends) <= 1.0)


def test_evolve_rejects_outside_start():
    with pytest.raises(ValueError):
        evolve_many([1.5], LORENTZ, TimeGrid(0.1, 0.01), StepScheme.LOW, 0, [0])


# ----------------------------------------------------------- Wiener integral


def test_wiener_zero_time():
    assert wiener_integral_statistic(0.0, 16, 100, RandomStream(0)) == (0.0, 0.0)


def test_wiener_single_partition():
    stream = RandomStream(4, 0)
    err = wiener_integral_errors(1.0, 1, 50_000, stream)
    w = stream.normals(50_000)
    assert np.allclose(err, -0.5 * (w * w - 1.0), rtol=0, atol=1e-15)
    assert abs(err.mean()) < 3 * err.std() / math.sqrt(len(err))


def test_wiener_identity_and_convergence():
    stream = RandomStream(2024, 0)
    err = wiener_integral_errors(1.0, 1024, 10_000, stream)
    assert abs(err.mean()) < 3 * err.std(ddof=1) / 100
    _, rms64 = wiener_integral_statistic(1.0, 64, 10_000, stream)
    _, rms4096 = wiener_integral_statistic(1.0, 4096, 10_000, stream)
    assert rms4096 < rms64
    # the discretization error has variance t**2 / (2 n)
    assert rms64 == pytest.approx(1 / math.sqrt(128), rel=0.05)
    assert rms4096 == pytest.approx(1 / math.sqrt(8192), rel=0.05)


def test_wiener_rejects_bad_sizes():
    with pytest.raises(ValueError):
        wiener_integral_errors(1.0, 0, 10, RandomStream(0))
    with pytest.raises(ValueError):
        wiener_integral_errors(-1.0, 4, 10, RandomStream(0))

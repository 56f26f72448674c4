import math

import numpy as np
import pytest

from stofhn.errors import ConfigurationError
from stofhn.grid import laplacian_eigenpairs
from stofhn.noise import (
    MollifierSpec,
    NoiseModel,
    WienerPath,
    evaluate_W,
    exp_W,
    ito_correction_field,
    mollify_path,
    noise_history,
    sample_path,
    uniform_time_grid,
    write_path_csv,
)


@pytest.fixture(scope="module")
def time_grid():
    return uniform_time_grid(1.0, 400)


def test_empty_model_gives_zero_field(unit_grid, time_grid):
    model = NoiseModel(unit_grid, (), ())
    path = sample_path(model, time_grid, seed=1)
    assert path.mode_count == 0
    assert np.all(evaluate_W(path, model, 17).values == 0.0)


def test_same_seed_reproduces_bitwise(default_noise, time_grid):
    a = sample_path(default_noise, time_grid, seed=99)
    b = sample_path(default_noise, time_grid, seed=99)
    np.testing.assert_array_equal(a.beta, b.beta)


def test_different_seeds_differ(default_noise, time_grid):
    a = sample_path(default_noise, time_grid, seed=1)
    b = sample_path(default_noise, time_grid, seed=2)
    assert not np.array_equal(a.beta, b.beta)


def test_increment_variance_single_mode(unit_grid):
    # Sample variance of the terminal value over 10^4 paths sits within five
    # standard errors of T (chi-squared sampling distribution).
    model = NoiseModel(unit_grid, (1.0,), tuple(laplacian_eigenpairs(unit_grid, 1)))
    t_grid = uniform_time_grid(1.0, 4)
    n = 10_000
    finals = np.array([sample_path(model, t_grid, seed=s).beta[0, -1] for s in range(n)])
    sample_var = float(np.var(finals))
    stderr = math.sqrt(2.0 / n)
    assert abs(sample_var - 1.0) <= 5 * stderr


def test_path_starts_at_zero(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=3)
    assert np.all(path.beta[:, 0] == 0.0)


def test_evaluate_at_zero_is_zero(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=3)
    assert np.all(evaluate_W(path, default_noise, 0).values == 0.0)


def test_single_mode_evaluation_arithmetic(unit_grid):
    pair = laplacian_eigenpairs(unit_grid, 1)[0]
    model = NoiseModel(unit_grid, (2.0,), (pair,))
    times = uniform_time_grid(1.0, 2)
    path = WienerPath(times, np.array([[0.0, 0.5, 0.1]]), seed=None)
    w = evaluate_W(path, model, 1)
    np.testing.assert_allclose(w.values, pair.eigenfunction.values, rtol=1e-14)


def test_pointwise_variance_profile(unit_grid):
    # Var W(t, x) = t sum_j mu_j^2 e_j(x)^2 pointwise, five standard errors.
    model = NoiseModel.default(unit_grid, mode_count=4)
    t_grid = uniform_time_grid(0.5, 2)
    n = 10_000
    samples = np.empty((n, unit_grid.size))
    for s in range(n):
        path = sample_path(model, t_grid, seed=s)
        samples[s] = noise_history(path, model)[-1]
    var = samples.var(axis=0)
    expected = 0.5 * np.sum(
        np.square(np.asarray(model.coefficients))[:, None] * model._mode_matrix**2, axis=0
    )
    stderr = expected * math.sqrt(2.0 / n)
    assert np.all(np.abs(var - expected) <= 5 * stderr)


def test_evaluate_index_out_of_range(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=3)
    with pytest.raises(ConfigurationError):
        evaluate_W(path, default_noise, 401)


def test_convergence_sum_recorded(unit_grid):
    model = NoiseModel.default(unit_grid, mode_count=8, decay=1.5)
    sups = np.max(np.abs(model._mode_matrix), axis=1)
    expected = sum(m**2 * s**2 for m, s in zip(model.coefficients, sups))
    assert model.convergence_sum == pytest.approx(expected)


def test_restrict_keeps_every_other_node(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=11)
    coarse = path.restrict(2)
    assert coarse.num_steps == 200
    np.testing.assert_array_equal(coarse.beta, path.beta[:, ::2])
    with pytest.raises(ConfigurationError):
        path.restrict(3)


# --- mollification ---------------------------------------------------------

def test_mollify_zero_path(default_noise, time_grid):
    path = WienerPath(time_grid, np.zeros((8, time_grid.size)), seed=None)
    out = mollify_path(path, MollifierSpec(epsilon=8 * path.dt))
    assert np.all(out.beta == 0.0)


def test_mollify_constant_path(default_noise, time_grid):
    path = WienerPath(time_grid, np.full((2, time_grid.size), 1.3), seed=None)
    out = mollify_path(path, MollifierSpec(epsilon=8 * path.dt))
    np.testing.assert_allclose(out.beta, 1.3, rtol=1e-13)


def test_mollify_width_too_small(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=0)
    with pytest.raises(ConfigurationError):
        mollify_path(path, MollifierSpec(epsilon=1.5 * path.dt))


def test_kernel_unit_mass(time_grid):
    spec = MollifierSpec(epsilon=0.02)
    assert abs(spec.kernel_mass(1.0 / 400) - 1.0) <= 1e-8


def test_kernel_support(time_grid):
    weights = MollifierSpec(epsilon=0.02).discrete_weights(1.0 / 400)
    assert weights.size == 2 * 8 + 1
    assert weights[0] == 0.0 and weights[-1] == 0.0


def test_mollification_error_shrinks_with_width(default_noise, time_grid):
    for seed in range(10):
        path = sample_path(default_noise, time_grid, seed=seed)
        sups = []
        for eps in (8 * path.dt, 4 * path.dt, 2 * path.dt):
            smooth = mollify_path(path, MollifierSpec(epsilon=eps))
            sups.append(float(np.max(np.abs(smooth.beta - path.beta))))
        assert sups[0] > sups[1] > sups[2]


def test_mollified_functional_bias_decreases(default_noise, time_grid):
    # A smooth functional of the field: mean over paths of the time-integrated
    # squared field; the smoothing bias decays with the width.
    gaps = np.zeros(3)
    for seed in range(10):
        path = sample_path(default_noise, time_grid, seed=seed)
        w_raw = noise_history(path, default_noise)
        phi_raw = float(np.mean(w_raw**2))
        for i, eps in enumerate((8 * path.dt, 4 * path.dt, 2 * path.dt)):
            smooth = mollify_path(path, MollifierSpec(epsilon=eps))
            phi = float(np.mean(noise_history(smooth, default_noise) ** 2))
            gaps[i] += abs(phi - phi_raw)
    assert gaps[0] > gaps[1] > gaps[2]


def test_mollified_path_is_smoother(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=4)
    smooth = mollify_path(path, MollifierSpec(epsilon=8 * path.dt))
    raw_quot = np.max(np.abs(np.diff(path.beta, axis=1))) / path.dt
    smooth_quot = np.max(np.abs(np.diff(smooth.beta, axis=1))) / path.dt
    assert smooth_quot < raw_quot


# --- correction field and exponentials -------------------------------------

def test_ito_correction_empty_model(unit_grid):
    model = NoiseModel(unit_grid, (), ())
    assert np.all(ito_correction_field(model).values == 0.0)


def test_ito_correction_single_mode(unit_grid):
    pair = laplacian_eigenpairs(unit_grid, 1)[0]
    model = NoiseModel(unit_grid, (2.0,), (pair,))
    field = ito_correction_field(model)
    np.testing.assert_allclose(field.values, 2.0 * pair.eigenfunction.values**2, rtol=1e-14)


def test_ito_correction_nonnegative(unit_grid, rng):
    for _ in range(5):
        coeffs = tuple(rng.uniform(-2, 2, size=5))
        model = NoiseModel(unit_grid, coeffs, tuple(laplacian_eigenpairs(unit_grid, 5)))
        assert np.all(ito_correction_field(model).values >= 0.0)


def test_exp_at_time_zero_is_one(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=6)
    np.testing.assert_array_equal(exp_W(path, default_noise, 0, +1).values, 1.0)


def test_exp_reciprocal_identity(default_noise, time_grid):
    path = sample_path(default_noise, time_grid, seed=6)
    for n in (10, 200, 400):
        prod = exp_W(path, default_noise, n, +1).values * exp_W(path, default_noise, n, -1).values
        assert np.max(np.abs(prod - 1.0)) <= 1e-12


def test_exp_matches_scalar_exponential(unit_grid):
    pair = laplacian_eigenpairs(unit_grid, 1)[0]
    model = NoiseModel(unit_grid, (1.5,), (pair,))
    times = uniform_time_grid(1.0, 2)
    path = WienerPath(times, np.array([[0.0, 0.7, 0.2]]), seed=None)
    out = exp_W(path, model, 1, +1)
    np.testing.assert_allclose(out.values, np.exp(1.5 * 0.7 * pair.eigenfunction.values), rtol=1e-14)


def test_exp_overflow_guard(unit_grid):
    pair = laplacian_eigenpairs(unit_grid, 1)[0]
    model = NoiseModel(unit_grid, (1.0,), (pair,))
    times = uniform_time_grid(1.0, 1)
    path = WienerPath(times, np.array([[0.0, 600.0]]), seed=None)
    from stofhn.errors import NumericError

    with pytest.raises(NumericError):
        exp_W(path, model, 1, +1)


def test_path_csv_export(default_noise, time_grid, tmp_path):
    path = sample_path(default_noise, time_grid, seed=8)
    dest = tmp_path / "path.csv"
    write_path_csv(path, dest)
    lines = dest.read_text().strip().splitlines()
    assert lines[0] == "t,mode_index,beta"
    assert len(lines) == 1 + path.mode_count * time_grid.size

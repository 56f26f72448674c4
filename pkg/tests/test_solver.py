import math

import numpy as np
import pytest
from scipy.optimize import brentq

from stofhn.errors import ConfigurationError, NumericError
from stofhn.grid import laplacian_eigenpairs, norm_l2
from stofhn.noise import (
    NoiseModel,
    WienerPath,
    ito_correction_field,
    noise_history,
    sample_path,
    uniform_time_grid,
)
from stofhn.nonlinearity import DiffusionLaw, IonicCubic, ionic_eval, yosida_G
from stofhn.solver import (
    StateProblem,
    StepperParams,
    scalar_sde_oracle,
    solve_forward,
    step_rescaled,
    strong_solution_residual,
    write_trajectory_csv,
)


def make_problem(grid, noise, **kw):
    defaults = dict(
        grid=grid,
        diffusion=DiffusionLaw("cubic_monotone", c=1.0, b=0.5),
        ionic=IonicCubic(a=0.5),
        initial=grid.field_from_function(lambda x: 0.5 * np.sin(np.pi * x)),
        horizon=1.0,
        damping=grid.constant_field(0.1),
        noise=noise,
    )
    defaults.update(kw)
    return StateProblem(**defaults)


@pytest.fixture(scope="module")
def noise31():
    from stofhn.grid import SpatialGrid

    return NoiseModel.default(SpatialGrid(interior=(31,)), mode_count=6)


def test_zero_is_a_fixed_point(small_grid, noise31):
    problem = make_problem(small_grid, noise31, initial=small_grid.zero_field())
    times = uniform_time_grid(1.0, 100)
    for seed in range(3):
        path = sample_path(noise31, times, seed)
        sol = solve_forward(problem, StepperParams(dt=0.01), path)
        assert np.all(sol.y == 0.0)
        assert np.all(sol.x == 0.0)


def test_single_step_heat_decay(small_grid):
    # Linear flux, no reaction, no noise: one implicit step multiplies an
    # eigenmode by the exact discrete factor 1/(1 + dt lambda).
    pair = laplacian_eigenpairs(small_grid, 1)[0]
    problem = StateProblem(
        grid=small_grid,
        diffusion=DiffusionLaw("linear", c=1.0),
        ionic=None,
        initial=pair.eigenfunction,
        horizon=1.0,
        noise=None,
        noise_enabled=False,
    )
    params = StepperParams(dt=1.0 / 100)
    out = step_rescaled(pair.eigenfunction, 0, problem, params)
    expected = pair.eigenfunction.values / (1.0 + params.dt * pair.eigenvalue)
    np.testing.assert_allclose(out.values, expected, atol=1e-12)


def test_diffusion_off_step_matches_nodewise_scalar_solve(small_grid, noise31):
    # With the flux off the implicit step decouples: each node solves the
    # same scalar equation, recomputed here with a bracketing root finder.
    problem = make_problem(small_grid, noise31, diffusion_enabled=False)
    params = StepperParams(dt=1.0 / 100)
    times = uniform_time_grid(1.0, 100)
    path = sample_path(noise31, times, seed=7)
    y0 = problem.initial
    y1 = step_rescaled(y0, 0, problem, params, path)

    w1 = noise_history(path, noise31)[1]
    mu = ito_correction_field(noise31).values.ravel()
    f = problem.damping.values.ravel()
    cubic = problem.ionic
    dt = params.dt
    for i in range(small_grid.size):
        rhs = math.exp(w1[i]) * y0.values[i]

        def residual(z, i=i, rhs=rhs):
            g_eps = yosida_G(cubic, params.yosida_epsilon, z)
            return z + dt * (g_eps + (f[i] + mu[i]) * z) - rhs

        bracket = 2.0 * max(1.0, abs(rhs))
        z_star = brentq(residual, -bracket, bracket, xtol=1e-14)
        assert abs(y1.values[i] - math.exp(-w1[i]) * z_star) <= 1e-9


def test_trajectory_transformation_identity(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    times = uniform_time_grid(1.0, 100)
    path = sample_path(noise31, times, seed=1)
    sol = solve_forward(problem, StepperParams(dt=0.01), path)
    w = noise_history(path, noise31)
    assert np.max(np.abs(sol.x - np.exp(w) * sol.y)) <= 1e-12
    np.testing.assert_array_equal(sol.y[0], problem.initial.values.ravel())


def test_forward_deterministic_given_path(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    times = uniform_time_grid(1.0, 100)
    path = sample_path(noise31, times, seed=2)
    a = solve_forward(problem, StepperParams(dt=0.01), path)
    b = solve_forward(problem, StepperParams(dt=0.01), path)
    np.testing.assert_array_equal(a.y, b.y)


def test_manufactured_solution_first_order(small_grid):
    # Halving dt halves the gap to a fine-step reference on the same grid;
    # the manufactured forcing keeps the trajectory away from equilibrium.
    cubic = IonicCubic(a=0.5)
    f_const = 0.3
    xs = small_grid.axis_coordinates()

    def solve_final(steps):
        times = uniform_time_grid(1.0, steps)
        exact = np.exp(-times)[:, None] * np.sin(np.pi * xs)[None, :]
        forcing = (-exact) + (np.pi**2) * exact + ionic_eval(cubic, exact) + f_const * exact
        problem = StateProblem(
            grid=small_grid,
            diffusion=DiffusionLaw("linear", c=1.0),
            ionic=cubic,
            initial=small_grid.field(exact[0]),
            horizon=1.0,
            damping=small_grid.constant_field(f_const),
            forcing=forcing,
            noise=None,
            noise_enabled=False,
        )
        sol = solve_forward(problem, StepperParams(dt=1.0 / steps))
        return sol.x[-1]

    reference = solve_final(1280)
    errs = [
        norm_l2(small_grid.field(solve_final(s) - reference)) for s in (20, 40, 80)
    ]
    assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.25)
    assert errs[1] / errs[2] == pytest.approx(2.0, abs=0.25)


def test_invariant_box_with_damping(small_grid, rng):
    # Reaction on, damping 0.15, no noise: initial data in [0, 1] stays there
    # and the sup norm does not grow.
    problem_base = dict(
        grid=small_grid,
        diffusion=DiffusionLaw("cubic_monotone", c=1.0, b=0.5),
        ionic=IonicCubic(a=0.5),
        horizon=0.5,
        damping=small_grid.constant_field(0.15),
        noise=None,
        noise_enabled=False,
    )
    for _ in range(20):
        values = np.clip(
            0.5 + 0.5 * np.sin(np.pi * small_grid.axis_coordinates()) * rng.uniform(-1, 1)
            + 0.15 * rng.standard_normal(31),
            0.0,
            1.0,
        )
        problem = StateProblem(initial=small_grid.field(values), **problem_base)
        sol = solve_forward(problem, StepperParams(dt=1.0 / 100))
        sups = np.max(np.abs(sol.y), axis=1)
        assert np.all(sups <= sups[0] + 1e-10)
        assert np.all(sol.y >= -1e-10) and np.all(sol.y <= 1.0 + 1e-10)


def test_supnorm_stays_in_apriori_box(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    bound = 10.0 * (1.0 + float(np.max(np.abs(problem.initial.values))))
    times = uniform_time_grid(1.0, 100)
    for seed in range(20):
        path = sample_path(noise31, times, seed=seed)
        sol = solve_forward(problem, StepperParams(dt=0.01), path)
        assert float(np.max(np.abs(sol.y))) <= bound


def test_energy_diagnostics_bounded(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    times = uniform_time_grid(1.0, 100)
    sups = []
    energies = []
    for seed in range(10):
        path = sample_path(noise31, times, seed=seed)
        sol = solve_forward(problem, StepperParams(dt=0.01), path)
        sups.append(sol.diagnostics["energy_sup_l2sq"])
        energies.append(sol.diagnostics["energy_grad_gamma"])
    total = np.asarray(sups) + np.asarray(energies)
    assert np.all(np.isfinite(total))
    assert np.max(total) <= 50.0 * (1.0 + float(np.max(np.abs(problem.initial.values))))


def test_overflow_guard_aborts(small_grid):
    pair = laplacian_eigenpairs(small_grid, 1)[0]
    model = NoiseModel(small_grid, (1.0,), (pair,))
    times = uniform_time_grid(1.0, 4)
    beta = np.zeros((1, 5))
    beta[0, -1] = 60.0
    path = WienerPath(times, beta, seed=None)
    problem = make_problem(small_grid, model, horizon=1.0)
    with pytest.raises(NumericError) as err:
        solve_forward(problem, StepperParams(dt=0.25), path)
    assert "sup" in str(err.value).lower() or "overflow" in str(err.value).lower()


def test_newton_budget_error_reports_step(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    times = uniform_time_grid(1.0, 100)
    path = sample_path(noise31, times, seed=0)
    with pytest.raises(NumericError) as err:
        solve_forward(problem, StepperParams(dt=0.01, newton_tol=1e-15, newton_max_iters=1), path)
    assert "step" in err.value.details


def test_path_grid_mismatch(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    path = sample_path(noise31, uniform_time_grid(1.0, 50), seed=0)
    with pytest.raises(ConfigurationError):
        solve_forward(problem, StepperParams(dt=0.01), path)


# --- per-node explicit oracle ----------------------------------------------

def test_oracle_requires_diffusion_off(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    path = sample_path(noise31, uniform_time_grid(1.0, 100), seed=0)
    with pytest.raises(ConfigurationError):
        scalar_sde_oracle(problem, path)


def test_oracle_constant_without_drivers(small_grid):
    problem = StateProblem(
        grid=small_grid,
        diffusion=DiffusionLaw("linear", c=1.0),
        ionic=None,
        initial=small_grid.constant_field(0.7),
        horizon=1.0,
        noise=None,
        diffusion_enabled=False,
        noise_enabled=False,
    )
    x = scalar_sde_oracle(problem, None, dt=0.01)
    np.testing.assert_allclose(x, 0.7, rtol=1e-14)


def test_oracle_geometric_exact_solution(small_grid, noise31):
    # No reaction, no damping: each node follows the exponential solution
    # x0 exp(W - t mu); the explicit scheme converges to it as dt shrinks.
    problem = StateProblem(
        grid=small_grid,
        diffusion=DiffusionLaw("linear", c=1.0),
        ionic=None,
        initial=small_grid.constant_field(1.0),
        horizon=1.0,
        noise=noise31,
        diffusion_enabled=False,
    )
    mu = ito_correction_field(noise31).values.ravel()
    fine = uniform_time_grid(1.0, 1600)
    acc = {100: 0.0, 400: 0.0, 1600: 0.0}
    for seed in range(10):
        path_fine = sample_path(noise31, fine, seed=20 + seed)
        for steps in acc:
            path = path_fine.restrict(1600 // steps)
            w = noise_history(path, noise31)
            exact = np.exp(w[-1] - mu)
            x = scalar_sde_oracle(problem, path)
            acc[steps] += float(np.mean((x[-1] - exact) ** 2))
    rms = {k: math.sqrt(v / 10) for k, v in acc.items()}
    assert rms[100] > rms[400] > rms[1600]


def test_routes_agree_as_dt_shrinks(small_grid, noise31):
    problem = make_problem(small_grid, noise31, diffusion_enabled=False)
    fine = uniform_time_grid(1.0, 800)
    errs = {200: 0.0, 400: 0.0, 800: 0.0}
    for seed in range(20):
        path_fine = sample_path(noise31, fine, seed=seed)
        for steps in errs:
            path = path_fine.restrict(800 // steps)
            sol = solve_forward(problem, StepperParams(dt=1.0 / steps), path)
            oracle = scalar_sde_oracle(problem, path)
            errs[steps] += float(np.mean((sol.x[-1] - oracle[-1]) ** 2))
    rms = {k: math.sqrt(v / 20) for k, v in errs.items()}
    assert rms[200] > rms[400] > rms[800]


# --- integral-identity defect ----------------------------------------------

def test_residual_zero_for_zero_solution(small_grid, noise31):
    problem = make_problem(small_grid, noise31, initial=small_grid.zero_field())
    times = uniform_time_grid(1.0, 100)
    path = sample_path(noise31, times, seed=0)
    sol = solve_forward(problem, StepperParams(dt=0.01), path)
    assert strong_solution_residual(sol, problem, path) == 0.0


def test_residual_first_order_deterministic(small_grid):
    problem = make_problem(small_grid, None, noise_enabled=False)
    res = []
    for steps in (100, 200, 400):
        sol = solve_forward(problem, StepperParams(dt=1.0 / steps))
        res.append(strong_solution_residual(sol, problem))
    assert res[0] / res[1] == pytest.approx(2.0, abs=0.3)
    assert res[1] / res[2] == pytest.approx(2.0, abs=0.3)


def test_residual_decreases_for_noisy_runs(small_grid, noise31):
    problem = make_problem(small_grid, noise31)
    fine = uniform_time_grid(1.0, 400)
    acc = {100: 0.0, 200: 0.0, 400: 0.0}
    for seed in range(5):
        path_fine = sample_path(noise31, fine, seed=seed)
        for steps in acc:
            path = path_fine.restrict(400 // steps)
            sol = solve_forward(problem, StepperParams(dt=1.0 / steps), path)
            acc[steps] += strong_solution_residual(sol, problem, path)
    assert acc[100] > acc[200] > acc[400]


# --- 2D forward smoke -------------------------------------------------------

def test_forward_2d(grid_2d):
    noise = NoiseModel.default(grid_2d, mode_count=4)
    problem = StateProblem(
        grid=grid_2d,
        diffusion=DiffusionLaw("cubic_monotone", c=1.0, b=0.5),
        ionic=IonicCubic(a=0.5),
        initial=grid_2d.field_from_function(
            lambda x, y: 0.4 * np.sin(np.pi * x) * np.sin(np.pi * y)
        ),
        horizon=0.2,
        damping=grid_2d.constant_field(0.1),
        noise=noise,
    )
    times = uniform_time_grid(0.2, 40)
    path = sample_path(noise, times, seed=0)
    sol = solve_forward(problem, StepperParams(dt=0.005), path)
    assert np.all(np.isfinite(sol.y))
    w = noise_history(path, noise)
    assert np.max(np.abs(sol.x - np.exp(w) * sol.y)) <= 1e-12
    assert strong_solution_residual(sol, problem, path) <= 0.1


def test_trajectory_csv(small_grid, noise31, tmp_path):
    problem = make_problem(small_grid, noise31)
    times = uniform_time_grid(1.0, 100)
    path = sample_path(noise31, times, seed=0)
    sol = solve_forward(problem, StepperParams(dt=0.01), path)
    dest = tmp_path / "traj.csv"
    write_trajectory_csv(sol, dest, stride=20)
    lines = dest.read_text().strip().splitlines()
    assert lines[0] == "t,node_index,y,X"
    assert len(lines) == 1 + 6 * small_grid.size

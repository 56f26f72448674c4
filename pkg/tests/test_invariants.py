"""Cross-module consistency checks that tie noise, solver and control layers
together."""

import json
import math

import numpy as np
import pytest

from stofhn.control import ControlProblem, solve_adjoint, solve_all_forward, solve_variation
from stofhn.errors import ConfigurationError
from stofhn.grid import laplacian_eigenpairs
from stofhn.noise import (
    NoiseModel,
    ito_correction_field,
    noise_history,
    sample_path,
    uniform_time_grid,
)
from stofhn.nonlinearity import DiffusionLaw, IonicCubic
from stofhn.solver import StateProblem, StepperParams, solve_forward


def test_zero_coefficients_reproduce_deterministic_run(small_grid):
    # All mode weights zero: the correction field vanishes and the noisy
    # solve equals the noise-free solve exactly.
    modes = tuple(laplacian_eigenpairs(small_grid, 4))
    silent = NoiseModel(small_grid, (0.0, 0.0, 0.0, 0.0), modes)
    assert np.all(ito_correction_field(silent).values == 0.0)
    x0 = small_grid.field_from_function(lambda x: 0.4 * np.sin(np.pi * x))
    common = dict(
        grid=small_grid,
        diffusion=DiffusionLaw("cubic_monotone", c=1.0, b=0.5),
        ionic=IonicCubic(a=0.5),
        initial=x0,
        horizon=0.5,
        damping=small_grid.constant_field(0.1),
    )
    times = uniform_time_grid(0.5, 50)
    path = sample_path(silent, times, seed=0)
    noisy = solve_forward(StateProblem(noise=silent, **common), StepperParams(dt=0.01), path)
    plain = solve_forward(
        StateProblem(noise=None, noise_enabled=False, **common), StepperParams(dt=0.01)
    )
    np.testing.assert_array_equal(noisy.y, plain.y)
    np.testing.assert_array_equal(noisy.x, plain.x)


def test_increments_uncorrelated_across_modes(unit_grid):
    model = NoiseModel.default(unit_grid, mode_count=3)
    path = sample_path(model, uniform_time_grid(1.0, 2000), seed=77)
    increments = np.diff(path.beta, axis=1)
    corr = np.corrcoef(increments)
    off = corr[~np.eye(3, dtype=bool)]
    # Five standard errors of a sample correlation over n = 2000 draws.
    assert np.max(np.abs(off)) <= 5.0 / math.sqrt(2000)


def test_negative_damping_rejected(small_grid):
    with pytest.raises(ConfigurationError):
        StateProblem(
            grid=small_grid,
            diffusion=DiffusionLaw("linear", c=1.0),
            ionic=None,
            initial=small_grid.zero_field(),
            horizon=1.0,
            damping=small_grid.constant_field(-0.1),
            noise=None,
            noise_enabled=False,
        )


def test_stepper_param_validation():
    with pytest.raises(ConfigurationError):
        StepperParams(dt=0.0)
    with pytest.raises(ConfigurationError):
        StepperParams(dt=0.01, yosida_epsilon=0.0)
    with pytest.raises(ConfigurationError):
        StepperParams(dt=0.01, diffusion_regularization=-1.0)


def test_control_problem_validation(small_grid):
    noise = NoiseModel.default(small_grid, mode_count=2)
    state = StateProblem(
        grid=small_grid,
        diffusion=DiffusionLaw("linear", c=1.0),
        ionic=None,
        initial=small_grid.zero_field(),
        horizon=1.0,
        noise=noise,
    )
    target = small_grid.zero_field()
    stepper = StepperParams(dt=0.01)
    path = sample_path(noise, uniform_time_grid(1.0, 100), seed=0)
    with pytest.raises(ConfigurationError):
        ControlProblem(state=state, running_target=target, terminal_target=target,
                       alpha=-0.1, bound=1.0, stepper=stepper, path=path)
    with pytest.raises(ConfigurationError):
        ControlProblem(state=state, running_target=target, terminal_target=target,
                       alpha=0.1, bound=0.0, stepper=stepper, path=path)
    with pytest.raises(ConfigurationError):
        # noisy problems need a path or seeds
        ControlProblem(state=state, running_target=target, terminal_target=target,
                       alpha=0.1, bound=1.0, stepper=stepper)
    with pytest.raises(ConfigurationError):
        ControlProblem(state=state, running_target=target, terminal_target=target,
                       alpha=0.1, bound=1.0, stepper=stepper, path=path, seeds=(1,))


def test_aborted_paths_surface_in_manifest(tmp_path):
    # A deliberately violent spectrum trips the overflow guard; the manifest
    # must flag those paths instead of dropping them.
    from stofhn.config import default_config
    from stofhn.runner import run_forward

    cfg = default_config("forward").replace(
        grid={"dimension": 1, "extent": [1.0], "interior": [31]},
        time={"horizon": 1.0, "dt": 0.01},
        noise={"modes": 2, "decay": 0.5, "amplitude": 40.0},
        seeds=[0, 1, 2, 3],
    )
    manifest = run_forward(cfg, tmp_path / "hot")
    statuses = [p["status"] for p in manifest.paths]
    assert "aborted-overflow" in statuses
    on_disk = json.loads((tmp_path / "hot" / "manifest.json").read_text())
    assert any(p["status"] == "aborted-overflow" for p in on_disk["paths"])


def test_control_duality_in_2d(grid_2d):
    noise = NoiseModel.default(grid_2d, mode_count=3)
    state = StateProblem(
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
    target = grid_2d.zero_field()
    stepper = StepperParams(dt=0.01)
    path = sample_path(noise, uniform_time_grid(0.2, 20), seed=5)
    problem = ControlProblem(
        state=state, running_target=target, terminal_target=target,
        alpha=0.1, bound=1.0, stepper=stepper, path=path,
    )
    sol = solve_all_forward(problem, None)[0]
    adj = solve_adjoint(problem, sol, path)
    rng = np.random.default_rng(0)
    d = rng.standard_normal((problem.num_steps + 1, grid_2d.size))
    d[0] = 0.0
    zeta = solve_variation(problem, sol, path, d)
    w = noise_history(path, noise)
    dz = np.exp(w) * zeta
    vol = grid_2d.cell_volume
    dt = stepper.dt
    n = problem.num_steps
    tw = np.ones(n + 1)
    tw[0] = tw[-1] = 0.5
    v1 = target.values.ravel()
    lhs = sum(
        tw[k] * dt * vol * float(np.dot(2.0 * (sol.x[k] - v1), dz[k]))
        for k in range(1, n + 1)
    )
    lhs += vol * float(np.dot(adj.terminal_value, dz[n]))
    rhs = sum(dt * vol * float(np.dot(adj.weighted[k], d[k])) for k in range(1, n + 1))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

"""Verification suites.

Each suite exercises one checkable property of the solver stack at desk scale
(1D, 99 interior points, T = 1, dt = 1/400 unless the ladder itself varies
those) and returns a machine-readable result with the measured quantities and
thresholds. ``run_suites`` drives a selection; the CLI wraps it with file
output and a nonzero exit status on failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np

from .config import (
    ExperimentConfig,
    build_control_problem,
    build_state_problem,
    build_stepper,
    default_config,
)
from .control import (
    ControlProblem,
    OptimizerParams,
    bang_bang_refine,
    cost_psi,
    gradient_field,
    optimize,
    solve_adjoint,
    solve_all_forward,
    solve_variation,
)
from .errors import NumericError
from .grid import SpatialGrid, laplacian_eigenpairs
from .noise import MollifierSpec, mollify_path, sample_path, uniform_time_grid
from .nonlinearity import DiffusionLaw, IonicCubic, ionic_eval, resolvent_G, yosida_G
from .solver import (
    StateProblem,
    StepperParams,
    scalar_sde_oracle,
    solve_forward,
    strong_solution_residual,
)


@dataclass(eq=False)
class CriterionResult:
    name: str
    passed: bool
    summary: str
    metrics: dict = dataclass_field(default_factory=dict)
    rows: list = dataclass_field(default_factory=list)
    figure: Optional[dict] = None


def fit_loglog(xs, ys) -> tuple[float, float]:
    """Least-squares slope of log(y) vs log(x) and its standard error."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    n = lx.size
    coeffs, residuals, *_ = np.polyfit(lx, ly, 1, full=True)
    slope = float(coeffs[0])
    if n <= 2 or residuals.size == 0:
        return slope, 0.0
    sigma2 = float(residuals[0]) / (n - 2)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    return slope, math.sqrt(sigma2 / sxx)


def _l2(grid: SpatialGrid, flat: np.ndarray) -> float:
    return math.sqrt(float(grid.cell_volume * np.sum(flat**2)))


# ---------------------------------------------------------------------------
# 1. Transform route vs per-node explicit oracle (diffusion off)
# ---------------------------------------------------------------------------

def rescaling_equivalence(cfg: ExperimentConfig) -> CriterionResult:
    """Strong agreement of the two integration routes scales like sqrt(dt)."""
    n_paths = int(cfg.data["verify"]["equivalence_paths"])
    state = build_state_problem(cfg)
    state = StateProblem(
        grid=state.grid, diffusion=state.diffusion, ionic=state.ionic,
        initial=state.initial, horizon=state.horizon, damping=state.damping,
        forcing=state.forcing, control=None, noise=state.noise,
        diffusion_enabled=False, noise_enabled=True,
    )
    ladders = (200, 400, 800)
    fine = uniform_time_grid(state.horizon, ladders[-1])
    sq_err = {steps: 0.0 for steps in ladders}
    for seed in range(n_paths):
        path_fine = sample_path(state.noise, fine, seed)
        for steps in ladders:
            path = path_fine.restrict(ladders[-1] // steps)
            sol = solve_forward(state, StepperParams(dt=state.horizon / steps), path)
            oracle = scalar_sde_oracle(state, path)
            sq_err[steps] += _l2(state.grid, sol.x[-1] - oracle[-1]) ** 2
    rms = [math.sqrt(sq_err[s] / n_paths) for s in ladders]
    dts = [state.horizon / s for s in ladders]
    ratios = [rms[i] / rms[i + 1] for i in range(len(rms) - 1)]
    slope, stderr = fit_loglog(dts, rms)
    ratios_ok = all(1.2 <= r <= 1.7 for r in ratios)
    slope_ok = abs(slope - 0.5) <= 0.15
    passed = ratios_ok and slope_ok
    return CriterionResult(
        name="rescaling_equivalence",
        passed=passed,
        summary=(
            f"RMS route difference over {n_paths} paths: ratios "
            f"{', '.join(f'{r:.3f}' for r in ratios)} (window [1.2, 1.7]); "
            f"slope {slope:.3f} (target 0.5 +/- 0.15)"
        ),
        metrics={
            "paths": n_paths,
            "rms_errors": rms,
            "ratios": ratios,
            "slope": slope,
            "slope_stderr": stderr,
            "slope_ci95": [slope - 2 * stderr, slope + 2 * stderr],
            "ratios_ok": ratios_ok,
            "slope_ok": slope_ok,
        },
        rows=[(dt, e) for dt, e in zip(dts, rms)],
        figure={
            "kind": "loglog",
            "x": dts,
            "series": {"route difference": rms},
            "annotations": {"route difference": slope},
            "title": "transform route vs per-node oracle",
        },
    )


# ---------------------------------------------------------------------------
# 2. Deterministic convergence against a manufactured solution
# ---------------------------------------------------------------------------

def _manufactured_error(n_pts: int, steps: int, cubic: IonicCubic, f_const: float) -> float:
    grid = SpatialGrid(interior=(n_pts,))
    xs = grid.axis_coordinates()
    times = uniform_time_grid(1.0, steps)
    exact = np.exp(-times)[:, None] * np.sin(math.pi * xs)[None, :]
    # Source chosen so exp(-t) sin(pi x) solves the continuum equation.
    forcing = (-exact) + (math.pi**2) * exact + ionic_eval(cubic, exact) + f_const * exact
    problem = StateProblem(
        grid=grid,
        diffusion=DiffusionLaw("linear", c=1.0),
        ionic=cubic,
        initial=grid.field(exact[0].reshape(grid.shape)),
        horizon=1.0,
        damping=grid.constant_field(f_const),
        forcing=forcing,
        noise=None,
        noise_enabled=False,
    )
    sol = solve_forward(problem, StepperParams(dt=1.0 / steps))
    return _l2(grid, sol.x[-1] - exact[-1])


def deterministic_convergence(cfg: ExperimentConfig) -> CriterionResult:
    """First order in dt, second order in h, for the noise-free linear-flux
    problem with a known solution."""
    cubic = IonicCubic(a=0.5)
    f_const = 0.3
    temporal_steps = (25, 50, 100, 200)
    temporal_errs = [_manufactured_error(199, s, cubic, f_const) for s in temporal_steps]
    t_slope, t_stderr = fit_loglog([1.0 / s for s in temporal_steps], temporal_errs)

    spatial_h = (1.0 / 16, 1.0 / 32, 1.0 / 64)
    spatial_errs = [
        _manufactured_error(int(round(1.0 / h)) - 1, int(round(1.0 / h**2)), cubic, f_const)
        for h in spatial_h
    ]
    s_slope, s_stderr = fit_loglog(spatial_h, spatial_errs)

    passed = t_slope >= 0.9 and s_slope >= 1.8
    return CriterionResult(
        name="deterministic_convergence",
        passed=passed,
        summary=(
            f"manufactured solution: temporal order {t_slope:.3f} (>= 0.9), "
            f"spatial order {s_slope:.3f} (>= 1.8)"
        ),
        metrics={
            "temporal_slope": t_slope,
            "temporal_stderr": t_stderr,
            "temporal_ci95": [t_slope - 2 * t_stderr, t_slope + 2 * t_stderr],
            "temporal_errors": temporal_errs,
            "spatial_slope": s_slope,
            "spatial_stderr": s_stderr,
            "spatial_ci95": [s_slope - 2 * s_stderr, s_slope + 2 * s_stderr],
            "spatial_errors": spatial_errs,
        },
        rows=(
            [(f"temporal_dt_{1.0 / s:g}", e) for s, e in zip(temporal_steps, temporal_errs)]
            + [(f"spatial_h_{h:g}", e) for h, e in zip(spatial_h, spatial_errs)]
        ),
        figure={
            "kind": "loglog",
            "x": [1.0 / s for s in temporal_steps],
            "series": {"temporal": temporal_errs},
            "annotations": {"temporal": t_slope},
            "extra": {
                "x": list(spatial_h),
                "series": {"spatial": spatial_errs},
                "annotations": {"spatial": s_slope},
            },
            "title": "manufactured-solution convergence",
        },
    )


# ---------------------------------------------------------------------------
# 3. Resolvent regularization of the cubic
# ---------------------------------------------------------------------------

def yosida_approximation(cfg: ExperimentConfig) -> CriterionResult:
    """The regularized cubic converges uniformly on [-2, 2] as the width
    shrinks, and the defining resolvent equation is satisfied to 1e-12."""
    cubic = IonicCubic(a=0.5)
    zs = np.linspace(-2.0, 2.0, 401)
    exact = ionic_eval(cubic, zs)
    eps_ladder = (1e-1, 1e-2, 1e-3)
    sup_errors = []
    worst_residual = 0.0
    for eps in eps_ladder:
        approx = yosida_G(cubic, eps, zs)
        sup_errors.append(float(np.max(np.abs(approx - exact))))
        w = resolvent_G(cubic, eps, zs)
        worst_residual = max(
            worst_residual, float(np.max(np.abs(w + eps * ionic_eval(cubic, w) - zs)))
        )
    decreasing = all(a > b for a, b in zip(sup_errors, sup_errors[1:]))
    passed = decreasing and worst_residual <= 1e-12
    return CriterionResult(
        name="yosida_approximation",
        passed=passed,
        summary=(
            f"sup errors {', '.join(f'{e:.3e}' for e in sup_errors)} strictly "
            f"decreasing: {decreasing}; worst resolvent residual {worst_residual:.2e} (<= 1e-12)"
        ),
        metrics={
            "eps_ladder": list(eps_ladder),
            "sup_errors": sup_errors,
            "strictly_decreasing": decreasing,
            "worst_residual": worst_residual,
        },
        rows=[(e, s) for e, s in zip(eps_ladder, sup_errors)],
        figure={
            "kind": "loglog",
            "x": list(eps_ladder),
            "series": {"sup |G_eps - G| on [-2,2]": sup_errors},
            "annotations": {},
            "title": "resolvent regularization error",
        },
    )


# ---------------------------------------------------------------------------
# 4. Boundedness screen across an ensemble
# ---------------------------------------------------------------------------

def supnorm_screen(cfg: ExperimentConfig) -> CriterionResult:
    """No trajectory of the default noisy problem leaves the a-priori box
    10 (1 + sup |x0|); no path aborts on the overflow guard."""
    n_seeds = int(cfg.data["verify"]["screen_seeds"])
    state = build_state_problem(cfg)
    stepper = build_stepper(cfg)
    times = uniform_time_grid(state.horizon, round(state.horizon / stepper.dt))
    bound = 10.0 * (1.0 + float(np.max(np.abs(state.initial.values))))
    worst = 0.0
    aborts = 0
    for seed in range(1000, 1000 + n_seeds):
        path = sample_path(state.noise, times, seed)
        try:
            sol = solve_forward(state, stepper, path)
        except NumericError:
            aborts += 1
            continue
        worst = max(worst, float(np.max(np.abs(sol.y))))
    passed = worst <= bound and aborts == 0
    return CriterionResult(
        name="supnorm_screen",
        passed=passed,
        summary=(
            f"sup |y| over {n_seeds} seeds: {worst:.3f} (bound {bound:.1f}); "
            f"aborted paths: {aborts}"
        ),
        metrics={"seeds": n_seeds, "sup_y": worst, "bound": bound, "aborts": aborts},
        rows=[("sup_y", worst), ("bound", bound), ("aborts", aborts)],
    )


# ---------------------------------------------------------------------------
# 5. Discrete adjoint fidelity
# ---------------------------------------------------------------------------

def _smooth_directions(problem: ControlProblem, count: int, seed: int) -> list[np.ndarray]:
    """Random directions built from low spatial modes with random time
    profiles; smooth enough that directional derivatives are well scaled."""
    rng = np.random.default_rng(seed)
    grid = problem.state.grid
    n_steps = problem.num_steps
    modes = laplacian_eigenpairs(grid, min(6, grid.size))
    times = np.linspace(0.0, 1.0, n_steps + 1)
    out = []
    for _ in range(count):
        d = np.zeros((n_steps + 1, grid.size))
        for k, pair in enumerate(modes):
            profile = rng.standard_normal() * np.sin((k + 1) * math.pi * times) + 0.5 * rng.standard_normal()
            d += profile[:, None] * pair.eigenfunction.values.ravel()[None, :]
        d[0] = 0.0
        out.append(d)
    return out


def adjoint_gradient_fidelity(cfg: ExperimentConfig, flip_adjoint_source: bool = False) -> CriterionResult:
    """Transpose (duality) identity to 1e-10 relative and central-difference
    directional derivatives of the cost to 1e-3 relative.

    ``flip_adjoint_source`` negates the adjoint input as a deliberate fault
    injection for negative-control testing; it must make the suite fail.
    """
    n_dirs = int(cfg.data["verify"]["gradient_directions"])
    cfg_tight = cfg.replace(stepper={"newton_tol": 1e-12})
    problem = build_control_problem(cfg_tight)
    path = problem.paths()[0]
    base_u = np.zeros((problem.num_steps + 1, problem.state.grid.size))
    sols = solve_all_forward(problem, base_u)
    sol = sols[0]
    adj = solve_adjoint(problem, sol, path)
    grad = gradient_field(base_u, adj, problem.alpha)
    if flip_adjoint_source:
        grad = -grad
    dt = problem.stepper.dt
    vol = problem.state.grid.cell_volume

    # Duality: weighted tracking sources against the state variation equal the
    # weighted multipliers against the control direction.
    rng_dir = _smooth_directions(problem, 1, seed=42)[0]
    zeta = solve_variation(problem, sol, path, rng_dir)
    from .solver import _ForwardWorkspace  # reuse the exp(W) tables

    ws = _ForwardWorkspace(problem.state, problem.stepper, path)
    dzeta = ws.exp_pos * zeta
    v1 = problem.running_target.values.ravel()
    n_steps = problem.num_steps
    tw = np.ones(n_steps + 1)
    tw[0] = tw[-1] = 0.5
    lhs = sum(
        tw[n] * dt * vol * float(np.dot(2.0 * (sol.x[n] - v1), dzeta[n]))
        for n in range(1, n_steps + 1)
    )
    lhs += vol * float(np.dot(adj.terminal_value, dzeta[n_steps]))
    rhs = sum(dt * vol * float(np.dot(adj.weighted[n], rng_dir[n])) for n in range(1, n_steps + 1))
    duality_rel = abs(lhs - rhs) / max(abs(lhs), 1e-300)

    # Central finite differences of the cost along smooth directions.
    lam = 1e-5
    fd_errors = []
    for d in _smooth_directions(problem, n_dirs, seed=7):
        plus = cost_psi(problem, base_u + lam * d, solve_all_forward(problem, base_u + lam * d))
        minus = cost_psi(problem, base_u - lam * d, solve_all_forward(problem, base_u - lam * d))
        fd = (plus - minus) / (2.0 * lam)
        pairing = float(dt * vol * np.sum(grad[1:] * d[1:]))
        fd_errors.append(abs(fd - pairing) / max(abs(fd), 1e-300))
    worst_fd = max(fd_errors)
    passed = duality_rel <= 1e-10 and worst_fd <= 1e-3
    return CriterionResult(
        name="adjoint_gradient_fidelity",
        passed=passed,
        summary=(
            f"duality identity relative error {duality_rel:.2e} (<= 1e-10); "
            f"worst directional-derivative error over {n_dirs} directions "
            f"{worst_fd:.2e} (<= 1e-3)"
        ),
        metrics={
            "duality_relative_error": duality_rel,
            "fd_relative_errors": fd_errors,
            "worst_fd_error": worst_fd,
            "lambda": lam,
        },
        rows=[("duality_relative_error", duality_rel)] + [
            (f"fd_direction_{i}", e) for i, e in enumerate(fd_errors)
        ],
    )


# ---------------------------------------------------------------------------
# 6. Optimizer contract on the default tracking problem
# ---------------------------------------------------------------------------

def optimizer_contract(cfg: ExperimentConfig) -> CriterionResult:
    """Monotone accepted costs, fixed-point residual below tolerance, and at
    least a 10 percent improvement over the uncontrolled cost."""
    problem = build_control_problem(cfg)
    report = optimize(problem, OptimizerParams(tol=1e-4, max_iters=200))
    baseline = report.costs[0]
    final = report.costs[-1]
    monotone = report.monotone()
    residual = report.residuals[-1]
    passed = (
        monotone
        and report.termination == "converged"
        and residual <= 1e-4
        and final <= 0.9 * baseline
    )
    return CriterionResult(
        name="optimizer_contract",
        passed=passed,
        summary=(
            f"cost {baseline:.4e} -> {final:.4e} "
            f"({final / baseline:.3f} of baseline, need <= 0.9); residual "
            f"{residual:.2e} (<= 1e-4); monotone: {monotone}; {report.iterations} iterations"
        ),
        metrics={
            "baseline_cost": baseline,
            "final_cost": final,
            "cost_ratio": final / baseline,
            "residual": residual,
            "monotone": monotone,
            "iterations": report.iterations,
            "termination": report.termination,
        },
        rows=[(i, c) for i, c in enumerate(report.costs)],
        figure={
            "kind": "history",
            "series": {"cost": report.costs, "residual": report.residuals},
            "title": "projected gradient run",
        },
    )


# ---------------------------------------------------------------------------
# 7. Switching structure under vanishing control penalty
# ---------------------------------------------------------------------------

def bang_bang_saturation(cfg: ExperimentConfig) -> CriterionResult:
    """As the penalty is driven to zero the optimal control saturates at the
    bound wherever the adjoint state is decisively signed."""
    target = {"kind": "sine", "k": 1, "amplitude": -0.2}
    cfg_bb = cfg.replace(control={"running_target": target, "terminal_target": target})
    alphas = [float(a) for a in cfg_bb.data["control"]["continuation_alphas"]]
    warm = None
    fractions = []
    deadband_fraction = None
    for alpha in alphas:
        problem = build_control_problem(cfg_bb, alpha=alpha)
        report = optimize(
            problem,
            OptimizerParams(tol=1e-3, max_iters=300, initial_control=warm),
        )
        warm = report.control.values
        sol = solve_all_forward(problem, warm)[0]
        adj = solve_adjoint(problem, sol, problem.paths()[0])
        refined = bang_bang_refine(problem, adj)
        active = np.abs(adj.p[1:]) > refined.deadband
        fractions.append(float(np.mean(np.abs(warm[1:][active]) >= 0.99 * problem.bound)))
        deadband_fraction = refined.deadband_fraction
    increasing = all(a < b for a, b in zip(fractions, fractions[1:]))
    passed = increasing and fractions[-1] >= 0.95
    return CriterionResult(
        name="bang_bang_saturation",
        passed=passed,
        summary=(
            f"saturated fraction under continuation {', '.join(f'{f:.3f}' for f in fractions)}; "
            f"increasing: {increasing}; final >= 0.95: {fractions[-1] >= 0.95}"
        ),
        metrics={
            "alphas": alphas,
            "saturated_fractions": fractions,
            "increasing": increasing,
            "deadband_fraction": deadband_fraction,
        },
        rows=[(a, f) for a, f in zip(alphas, fractions)],
        figure={
            "kind": "loglog",
            "x": alphas,
            "series": {"saturated fraction": fractions},
            "annotations": {},
            "title": "saturation under penalty continuation",
        },
    )


# ---------------------------------------------------------------------------
# 8. Integral-identity defect scaling
# ---------------------------------------------------------------------------

def integral_identity_residual(cfg: ExperimentConfig) -> CriterionResult:
    """Defect of the integral identity for the physical state: half order in
    dt for noisy runs, first order for deterministic runs.

    The noisy probe uses a weak linear flux so the stochastic part of the
    defect dominates the drift-quadrature part inside the ladder window;
    otherwise the measured exponent sits between the two regimes.
    """
    n_seeds = int(cfg.data["verify"]["residual_seeds"])
    noisy_cfg = cfg.replace(diffusion={"variant": "linear", "c": 0.2, "b": 0.0})
    noisy_state = build_state_problem(noisy_cfg)
    state = build_state_problem(cfg)
    ladders = (200, 400, 800)
    dts = [state.horizon / s for s in ladders]
    fine = uniform_time_grid(state.horizon, ladders[-1])
    noisy_acc = {s: [] for s in ladders}
    for seed in range(2000, 2000 + n_seeds):
        path_fine = sample_path(noisy_state.noise, fine, seed)
        for steps in ladders:
            path = path_fine.restrict(ladders[-1] // steps)
            sol = solve_forward(noisy_state, StepperParams(dt=state.horizon / steps), path)
            noisy_acc[steps].append(strong_solution_residual(sol, noisy_state, path))
    noisy = [float(np.mean(noisy_acc[s])) for s in ladders]
    noisy_slope, noisy_stderr = fit_loglog(dts, noisy)

    det_state = StateProblem(
        grid=state.grid, diffusion=state.diffusion, ionic=state.ionic,
        initial=state.initial, horizon=state.horizon, damping=state.damping,
        forcing=state.forcing, control=None, noise=None,
        diffusion_enabled=True, noise_enabled=False,
    )
    det = []
    for steps in ladders:
        sol = solve_forward(det_state, StepperParams(dt=state.horizon / steps))
        det.append(strong_solution_residual(sol, det_state))
    det_slope, det_stderr = fit_loglog(dts, det)

    passed = abs(noisy_slope - 0.5) <= 0.2 and abs(det_slope - 1.0) <= 0.2
    return CriterionResult(
        name="integral_identity_residual",
        passed=passed,
        summary=(
            f"defect slopes: noisy {noisy_slope:.3f} (0.5 +/- 0.2), "
            f"deterministic {det_slope:.3f} (1.0 +/- 0.2)"
        ),
        metrics={
            "noisy_residuals": noisy,
            "noisy_slope": noisy_slope,
            "noisy_stderr": noisy_stderr,
            "noisy_ci95": [noisy_slope - 2 * noisy_stderr, noisy_slope + 2 * noisy_stderr],
            "deterministic_residuals": det,
            "deterministic_slope": det_slope,
            "deterministic_stderr": det_stderr,
            "deterministic_ci95": [det_slope - 2 * det_stderr, det_slope + 2 * det_stderr],
            "seeds": n_seeds,
        },
        rows=[(dt, n, d) for dt, n, d in zip(dts, noisy, det)],
        figure={
            "kind": "loglog",
            "x": dts,
            "series": {"noisy": noisy, "deterministic": det},
            "annotations": {"noisy": noisy_slope, "deterministic": det_slope},
            "title": "integral-identity defect",
        },
    )


# ---------------------------------------------------------------------------
# 9. Smoothed-path consistency
# ---------------------------------------------------------------------------

def mollification_consistency(cfg: ExperimentConfig) -> CriterionResult:
    """Solutions driven by time-smoothed paths form a Cauchy ladder: the gap
    between successive smoothing widths shrinks as the width halves toward
    the raw-path solution."""
    n_seeds = int(cfg.data["verify"]["mollify_seeds"])
    state = build_state_problem(cfg)
    stepper = build_stepper(cfg)
    n_steps = round(state.horizon / stepper.dt)
    times = uniform_time_grid(state.horizon, n_steps)
    dt = stepper.dt
    # Smoothing widths 8, 4, 2 steps plus the grid floor: at width dt the
    # sampled kernel degenerates to the identity, so the last ladder member
    # is the raw path with the matching flux regularization.
    widths = [8 * dt, 4 * dt, 2 * dt, dt]
    gaps = np.zeros(len(widths) - 1)
    for seed in range(3000, 3000 + n_seeds):
        path = sample_path(state.noise, times, seed)
        finals = []
        for eps in widths:
            smooth = mollify_path(path, MollifierSpec(epsilon=eps)) if eps >= 2 * dt else path
            params = StepperParams(
                dt=dt,
                yosida_epsilon=stepper.yosida_epsilon,
                diffusion_regularization=eps,
                newton_tol=stepper.newton_tol,
                newton_max_iters=stepper.newton_max_iters,
            )
            finals.append(solve_forward(state, params, smooth).y[-1])
        for i in range(len(gaps)):
            gaps[i] += _l2(state.grid, finals[i] - finals[i + 1]) ** 2
    gaps = np.sqrt(gaps / n_seeds)
    decreasing = bool(np.all(gaps[:-1] > gaps[1:]))
    return CriterionResult(
        name="mollification_consistency",
        passed=decreasing,
        summary=(
            f"mean terminal gaps along the smoothing ladder "
            f"{', '.join(f'{g:.3e}' for g in gaps)} decreasing: {decreasing}"
        ),
        metrics={
            "widths": widths,
            "gaps": [float(g) for g in gaps],
            "decreasing": decreasing,
            "seeds": n_seeds,
        },
        rows=[(w, float(g)) for w, g in zip(widths[:-1], gaps)],
        figure={
            "kind": "loglog",
            "x": widths[:-1],
            "series": {"ladder gap": [float(g) for g in gaps]},
            "annotations": {},
            "title": "smoothed-path ladder",
        },
    )


# ---------------------------------------------------------------------------
# 10. Bitwise determinism of the verification command
# ---------------------------------------------------------------------------

def determinism(cfg: ExperimentConfig) -> CriterionResult:
    """Two executions of the verification command on an identical config
    produce byte-identical data files (timestamps live only in manifests)."""
    import tempfile
    from pathlib import Path

    from .runner import run_verify

    inner = cfg.replace(
        kind="verify",
        verify={
            "suites": ["yosida_approximation", "supnorm_screen"],
            "screen_seeds": 6,
        },
    )
    digests = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            run_verify(inner, Path(tmp))
            files = sorted(
                p for p in Path(tmp).iterdir()
                if p.suffix in (".csv", ".json") and p.name != "manifest.json"
            )
            digests.append({p.name: p.read_bytes() for p in files})
    same_names = set(digests[0]) == set(digests[1])
    identical = same_names and all(digests[0][k] == digests[1][k] for k in digests[0])
    return CriterionResult(
        name="determinism",
        passed=identical,
        summary=(
            f"repeated verification runs wrote {len(digests[0])} data files; "
            f"byte-identical: {identical}"
        ),
        metrics={"files": sorted(digests[0]), "identical": identical},
        rows=[(name, "identical" if identical else "differs") for name in sorted(digests[0])],
    )


SUITES: dict[str, Callable[[ExperimentConfig], CriterionResult]] = {
    "rescaling_equivalence": rescaling_equivalence,
    "deterministic_convergence": deterministic_convergence,
    "yosida_approximation": yosida_approximation,
    "supnorm_screen": supnorm_screen,
    "adjoint_gradient_fidelity": adjoint_gradient_fidelity,
    "optimizer_contract": optimizer_contract,
    "bang_bang_saturation": bang_bang_saturation,
    "integral_identity_residual": integral_identity_residual,
    "mollification_consistency": mollification_consistency,
    "determinism": determinism,
}


def run_suites(cfg: Optional[ExperimentConfig] = None, names: Optional[list[str]] = None) -> list[CriterionResult]:
    cfg = cfg or default_config("verify")
    if names is None:
        names = cfg.data["verify"]["suites"] or list(SUITES)
    results = []
    for name in names:
        if name not in SUITES:
            from .errors import ConfigurationError

            raise ConfigurationError(
                f"unknown verification suite {name!r}; available: {sorted(SUITES)}"
            )
        results.append(SUITES[name](cfg))
    return results

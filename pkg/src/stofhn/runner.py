"""Command implementations: forward ensembles, control solves, verification,
noise sampling. Each writes delimited data, rendered figures and a manifest
into the output directory and returns the manifest.

Per-path work is independent; with ``threads > 1`` paths run in a pool and the
results are reduced in seed order, so thread count never changes the numbers.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import (
    ExperimentConfig,
    build_control_problem,
    build_optimizer_params,
    build_state_problem,
    build_stepper,
)
from .control import (
    OptimizerParams,
    bang_bang_refine,
    optimize,
    solve_adjoint,
    solve_all_forward,
)
from .errors import ConfigurationError, NumericError
from .noise import sample_path, uniform_time_grid, write_path_csv
from .report import (
    save_histogram_figure,
    save_history_figure,
    save_loglog_figure,
    save_profile_figure,
    save_spacetime_figure,
    write_csv,
)
from .solver import solve_forward, write_trajectory_csv
from .verify import CriterionResult, run_suites


@dataclasses.dataclass
class RunManifest:
    kind: str
    config_hash: str
    config: dict
    tool_version: str
    paths: list[dict]
    files: list[str]
    timing: dict
    created_utc: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _new_manifest(kind: str, cfg: ExperimentConfig) -> RunManifest:
    return RunManifest(
        kind=kind,
        config_hash=cfg.content_hash(),
        config=cfg.data,
        tool_version=__version__,
        paths=[],
        files=[],
        timing={},
        created_utc=datetime.now(timezone.utc).isoformat(),
    )


def _finish(manifest: RunManifest, out_dir: Path, started: float) -> RunManifest:
    manifest.timing["wall_seconds"] = time.perf_counter() - started
    manifest.files = sorted(set(manifest.files))
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def _prepare(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed_list(cfg: ExperimentConfig, seeds_override: Optional[list[int]]) -> list[int]:
    if seeds_override is not None:
        return list(seeds_override)
    return list(cfg.data["seeds"])


def run_forward(
    cfg: ExperimentConfig,
    out_dir,
    seeds_override: Optional[list[int]] = None,
    threads: int = 1,
) -> RunManifest:
    """Forward ensemble: per-seed trajectories, pointwise ensemble statistics,
    sup-norm histogram, and profile/heatmap figures."""
    if cfg.data["kind"] != "forward":
        raise ConfigurationError(f"config kind is {cfg.data['kind']!r}, expected 'forward'")
    out = _prepare(out_dir)
    started = time.perf_counter()
    manifest = _new_manifest("forward", cfg)
    state = build_state_problem(cfg)
    stepper = build_stepper(cfg)
    seeds = _seed_list(cfg, seeds_override)
    stride = int(cfg.data["output"]["trajectory_stride"])
    check_stride = int(cfg.data["output"]["checkpoint_stride"])
    n_steps = round(state.horizon / stepper.dt)
    times = uniform_time_grid(state.horizon, n_steps)

    if not state.noise_active:
        seeds = seeds or [0]

    def one(seed: int):
        path = sample_path(state.noise, times, seed) if state.noise_active else None
        return solve_forward(state, stepper, path)

    jobs = seeds if state.noise_active else [seeds[0]]
    results: list[tuple[int, object]] = []
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(s, pool.submit(one, s)) for s in jobs]
            for s, fut in futures:
                try:
                    results.append((s, fut.result()))
                except NumericError as err:
                    results.append((s, err))
    else:
        for s in jobs:
            try:
                results.append((s, one(s)))
            except NumericError as err:
                results.append((s, err))

    completed = []
    for seed, res in results:
        if isinstance(res, NumericError):
            manifest.paths.append(
                {"seed": seed, "status": "aborted-overflow"
                 if "overflow" in str(res) else "numeric-failure",
                 "detail": str(res)}
            )
            continue
        manifest.paths.append({"seed": seed, "status": "completed"})
        completed.append((seed, res))
        name = f"trajectory_seed{seed}.csv"
        write_trajectory_csv(res, out / name, stride=stride)
        manifest.files.append(name)

    if completed:
        xs = np.stack([sol.x for _, sol in completed])
        mean = xs.mean(axis=0)
        var = xs.var(axis=0)
        checkpoints = list(range(0, n_steps + 1, check_stride))
        if checkpoints[-1] != n_steps:
            checkpoints.append(n_steps)
        rows = []
        for k in checkpoints:
            for i in range(state.grid.size):
                rows.append((times[k], i, mean[k, i], var[k, i]))
        write_csv(out / "ensemble_stats.csv", ["t", "node_index", "mean_X", "var_X"], rows)
        manifest.files.append("ensemble_stats.csv")

        sups = [float(np.max(np.abs(sol.x))) for _, sol in completed]
        bins = int(cfg.data["output"]["histogram_bins"])
        counts, edges = np.histogram(sups, bins=bins)
        write_csv(
            out / "supnorm_histogram.csv",
            ["bin_left", "bin_right", "count"],
            [(edges[i], edges[i + 1], int(counts[i])) for i in range(bins)],
        )
        manifest.files.append("supnorm_histogram.csv")

        if state.grid.dimension == 1:
            x_axis = state.grid.axis_coordinates()
            std = np.sqrt(var[-1])
            save_profile_figure(
                out / "final_profile.png",
                x_axis,
                {"ensemble mean X(T)": mean[-1]},
                band=(mean[-1] - std, mean[-1] + std),
                title=f"ensemble of {len(completed)} paths at T",
                ylabel="X",
            )
            manifest.files.append("final_profile.png")
            save_spacetime_figure(
                out / "sample_trajectory.png",
                times,
                completed[0][1].x,
                title=f"seed {completed[0][0]} trajectory",
            )
            manifest.files.append("sample_trajectory.png")
        save_histogram_figure(
            out / "supnorm_histogram.png",
            sups,
            bins=bins,
            title="sup-norm distribution",
            xlabel="sup |X|",
        )
        manifest.files.append("supnorm_histogram.png")

    return _finish(manifest, out, started)


def run_control(
    cfg: ExperimentConfig,
    out_dir,
    seeds_override: Optional[list[int]] = None,
    threads: int = 1,
) -> RunManifest:
    """Tracking-control solve: optimizer history, final control, controlled vs
    uncontrolled comparison; the zero-penalty route emits the switching
    control with its saturation fraction."""
    if cfg.data["kind"] != "control":
        raise ConfigurationError(f"config kind is {cfg.data['kind']!r}, expected 'control'")
    out = _prepare(out_dir)
    started = time.perf_counter()
    manifest = _new_manifest("control", cfg)
    alpha = float(cfg.data["control"]["alpha"])
    opt_params = build_optimizer_params(cfg)

    if alpha > 0.0:
        problem = build_control_problem(cfg)
        report = optimize(problem, opt_params)
        extra = {}
    else:
        # Penalty continuation down the configured ladder, then the switching
        # control from the final adjoint state.
        alphas = [float(a) for a in cfg.data["control"]["continuation_alphas"]]
        warm = None
        problem = None
        report = None
        for a in alphas:
            problem = build_control_problem(cfg, alpha=a)
            report = optimize(
                problem,
                OptimizerParams(
                    tol=max(opt_params.tol, 1e-3),
                    max_iters=opt_params.max_iters,
                    initial_control=warm,
                ),
            )
            warm = report.control.values
        sol = solve_all_forward(problem, warm)[0]
        adj = solve_adjoint(problem, sol, problem.paths()[0])
        refined = bang_bang_refine(problem, adj)
        n_rows, m = refined.control.values.shape
        rows = []
        for n in range(0, n_rows, max(1, int(cfg.data["output"]["trajectory_stride"]))):
            for i in range(m):
                rows.append((problem.stepper.dt * n, i, refined.control.values[n, i]))
        write_csv(out / "bangbang_control.csv", ["t", "node_index", "u"], rows)
        manifest.files.append("bangbang_control.csv")
        extra = {
            "continuation_alphas": alphas,
            "saturated_fraction": refined.saturated_fraction,
            "deadband_fraction": refined.deadband_fraction,
            "deadband": refined.deadband,
        }

    u = report.control.values
    baseline_sols = solve_all_forward(problem, None)
    from .control import cost_psi  # local import avoids a cycle at module load

    baseline_cost = cost_psi(problem, None, baseline_sols)
    controlled_sols = solve_all_forward(problem, u)
    final_cost = cost_psi(problem, u, controlled_sols)

    write_csv(
        out / "iterates.csv",
        ["iteration", "cost", "step_size", "residual"],
        [
            (i, report.costs[i], report.step_sizes[i - 1] if i > 0 else "", report.residuals[i])
            for i in range(len(report.costs))
        ],
    )
    manifest.files.append("iterates.csv")

    n_rows, m = u.shape
    stride = max(1, int(cfg.data["output"]["trajectory_stride"]))
    rows = []
    for n in range(0, n_rows, stride):
        for i in range(m):
            rows.append((problem.stepper.dt * n, i, u[n, i]))
    write_csv(out / "control_final.csv", ["t", "node_index", "u"], rows)
    manifest.files.append("control_final.csv")

    v1 = problem.running_target.values.ravel()
    v2 = problem.terminal_target.values.ravel()
    rows = [
        (i, v1[i], v2[i], baseline_sols[0].x[-1, i], controlled_sols[0].x[-1, i])
        for i in range(m)
    ]
    write_csv(
        out / "tracking_comparison.csv",
        ["node_index", "running_target", "terminal_target", "X_T_uncontrolled", "X_T_controlled"],
        rows,
    )
    manifest.files.append("tracking_comparison.csv")

    summary = {
        "config_hash": cfg.content_hash(),
        "alpha": alpha,
        "costs": report.costs,
        "residuals": report.residuals,
        "step_sizes": report.step_sizes,
        "termination": report.termination,
        "iterations": report.iterations,
        "forward_solves": report.forward_solves,
        "baseline_cost": baseline_cost,
        "final_cost": final_cost,
        "mismatch_reduction": 1.0 - final_cost / baseline_cost if baseline_cost > 0 else 0.0,
        **extra,
    }
    (out / "optimizer_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    manifest.files.append("optimizer_report.json")
    manifest.paths.append({"seed": cfg.data["control"]["frozen_seed"], "status": "completed"})

    save_history_figure(
        out / "optimizer_history.png",
        {"cost": report.costs, "residual": [max(r, 1e-300) for r in report.residuals]},
        title="optimizer history",
    )
    manifest.files.append("optimizer_history.png")
    if problem.state.grid.dimension == 1:
        save_spacetime_figure(
            out / "control_field.png",
            np.arange(n_rows) * problem.stepper.dt,
            u,
            title="control field",
        )
        manifest.files.append("control_field.png")
        x_axis = problem.state.grid.axis_coordinates()
        save_profile_figure(
            out / "tracking_comparison.png",
            x_axis,
            {
                "running target": v1,
                "uncontrolled X(T)": baseline_sols[0].x[-1],
                "controlled X(T)": controlled_sols[0].x[-1],
            },
            title="tracking at final time",
            ylabel="X",
        )
        manifest.files.append("tracking_comparison.png")

    return _finish(manifest, out, started)


def run_verify(
    cfg: ExperimentConfig,
    out_dir,
    suites: Optional[list[str]] = None,
) -> tuple[RunManifest, list[CriterionResult]]:
    """Run the verification suites and emit the pass/fail table, per-suite
    data rows and ladder figures."""
    out = _prepare(out_dir)
    started = time.perf_counter()
    manifest = _new_manifest("verify", cfg)
    results = run_suites(cfg, suites)

    table = [
        {
            "name": r.name,
            "passed": r.passed,
            "summary": r.summary,
            "metrics": r.metrics,
        }
        for r in results
    ]
    (out / "verify_results.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    manifest.files.append("verify_results.json")

    rows = []
    for r in results:
        rows.append((r.name, "passed", str(r.passed)))
        for row in r.rows:
            rows.append((r.name, *[str(v) for v in row]))
    width = max(len(row) for row in rows)
    header = ["criterion", "key", "value"] + [f"value{k}" for k in range(2, width - 1)]
    write_csv(out / "verify_results.csv", header,
              [tuple(row) + ("",) * (width - len(row)) for row in rows])
    manifest.files.append("verify_results.csv")

    for r in results:
        if not r.figure:
            continue
        name = f"{r.name}.png"
        fig = r.figure
        if fig["kind"] == "loglog":
            save_loglog_figure(
                out / name, fig["x"], fig["series"],
                annotations=fig.get("annotations"), title=fig.get("title", r.name),
            )
            extra = fig.get("extra")
            if extra:
                extra_name = f"{r.name}_spatial.png"
                save_loglog_figure(
                    out / extra_name, extra["x"], extra["series"],
                    annotations=extra.get("annotations"), title=fig.get("title", r.name),
                    xlabel="h",
                )
                manifest.files.append(extra_name)
        elif fig["kind"] == "history":
            save_history_figure(out / name, fig["series"], title=fig.get("title", r.name))
        manifest.files.append(name)

    manifest.paths = [{"seed": None, "status": "completed"}]
    manifest.timing["suites"] = {r.name: r.passed for r in results}
    return _finish(manifest, out, started), results


def run_sample_noise(
    cfg: ExperimentConfig,
    out_dir,
    seeds_override: Optional[list[int]] = None,
) -> RunManifest:
    """Sample noise paths and export them with a mode-trace figure."""
    out = _prepare(out_dir)
    started = time.perf_counter()
    manifest = _new_manifest("sample-noise", cfg)
    state = build_state_problem(cfg)
    if not state.noise_active:
        raise ConfigurationError("noise is disabled in this config; nothing to sample")
    stepper = build_stepper(cfg)
    n_steps = round(state.horizon / stepper.dt)
    times = uniform_time_grid(state.horizon, n_steps)
    seeds = _seed_list(cfg, seeds_override)
    for seed in seeds:
        path = sample_path(state.noise, times, seed)
        name = f"path_seed{seed}.csv"
        write_path_csv(path, out / name)
        manifest.files.append(name)
        manifest.paths.append({"seed": seed, "status": "completed"})
    if seeds:
        from .noise import noise_history

        path = sample_path(state.noise, times, seeds[0])
        save_history_figure(
            out / "mode_traces.png",
            {f"mode {j + 1}": path.beta[j] for j in range(min(4, path.mode_count))},
            title=f"per-mode trajectories, seed {seeds[0]}",
            xlabel="time node",
            logy=False,
        )
        manifest.files.append("mode_traces.png")
        if state.grid.dimension == 1:
            save_spacetime_figure(
                out / "noise_field.png",
                times,
                noise_history(path, state.noise),
                title=f"W(t, x), seed {seeds[0]}",
            )
            manifest.files.append("noise_field.png")
    return _finish(manifest, out, started)

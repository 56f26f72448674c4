"""Path-wise forward integration.

For a fixed realization of the driving noise the physical state X is obtained
through the pointwise substitution X = exp(W) y, where y solves a random PDE
with bounded coefficients:

    dy/dt + exp(-W) G(exp(W) y) - exp(-W) Lap(gamma(exp(W) y))
          + (f + mu) y = exp(-W) (F + u),

with mu the quadratic noise correction. The stepper is implicit in the
monotone part. Writing z = exp(W_{n+1}) y_{n+1}, one step solves

    z - dt Lap(gamma(z) + eps_d z) + dt G_eps(z) + dt (f + mu) z
        = exp(W_{n+1}) y_n + dt (F + u)_{n+1}

by damped Newton, then recovers y_{n+1} = exp(-W_{n+1}) z. The noise enters
only through the change of exp(W) between steps and the mu z term; no
stochastic-integral term is discretized. G_eps is the resolvent-regularized
cubic (default width 1e-6), which keeps the Newton map smooth.

Sign convention: the drift is dissipative, Lap(gamma(X)) - G(X) - f X + F + u.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConfigurationError, NumericError
from .grid import (
    ScalarField,
    SpatialGrid,
    apply_laplacian,
    laplacian_matrix,
    poisson_solve_array,
)
from .noise import NoiseModel, WienerPath, ito_correction_field, noise_history, uniform_time_grid
from .nonlinearity import (
    DiffusionLaw,
    IonicCubic,
    YosidaParam,
    gamma_eval,
    gamma_prime,
    ionic_eval,
    yosida_value_and_slope,
)

# Paths whose sup |W| exceeds this are refused: exp(W) is numerically
# meaningless long before the double-precision limit.
PATH_SUP_W_LIMIT = 50.0

TimeField = Union[None, ScalarField, np.ndarray]


@dataclass(frozen=True, eq=False)
class StateProblem:
    """Coefficients, data and flags of one forward problem."""

    grid: SpatialGrid
    diffusion: DiffusionLaw
    ionic: Optional[IonicCubic]
    initial: ScalarField
    horizon: float
    damping: Optional[ScalarField] = None
    forcing: TimeField = None
    control: TimeField = None
    noise: Optional[NoiseModel] = None
    diffusion_enabled: bool = True
    noise_enabled: bool = True

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if self.initial.grid != self.grid:
            raise ConfigurationError("initial datum lives on a different grid")
        if self.damping is not None:
            if self.damping.grid != self.grid:
                raise ConfigurationError("damping field lives on a different grid")
            if np.any(self.damping.values < 0.0):
                raise ConfigurationError("damping must be nonnegative pointwise")
        if self.noise_enabled and self.noise is not None and self.noise.grid != self.grid:
            raise ConfigurationError("noise model lives on a different grid")

    @property
    def noise_active(self) -> bool:
        return (
            self.noise_enabled
            and self.noise is not None
            and self.noise.mode_count > 0
        )

    def with_control(self, control: TimeField) -> "StateProblem":
        return replace(self, control=control)


@dataclass(frozen=True)
class StepperParams:
    dt: float
    yosida_epsilon: float = 1e-6
    diffusion_regularization: float = 0.0
    newton_tol: float = 1e-10
    newton_max_iters: int = 50

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.yosida_epsilon <= 0.0:
            raise ConfigurationError(
                f"yosida_epsilon must be positive, got {self.yosida_epsilon}"
            )
        if self.diffusion_regularization < 0.0:
            raise ConfigurationError(
                f"diffusion_regularization must be >= 0, got {self.diffusion_regularization}"
            )
        if self.newton_tol <= 0.0 or self.newton_max_iters < 1:
            raise ConfigurationError("invalid Newton parameters")


@dataclass(eq=False)
class StateSolution:
    """Trajectories of the transformed state y and the physical state X.

    X[n] = exp(W(t_n)) * y[n] holds pointwise by construction (it is the data
    model, not an approximation).
    """

    grid: SpatialGrid
    times: np.ndarray
    y: np.ndarray
    x: np.ndarray
    path: Optional[WienerPath]
    diagnostics: dict

    @property
    def num_steps(self) -> int:
        return self.times.size - 1

    def y_field(self, n: int) -> ScalarField:
        return ScalarField(self.grid, self.y[n].reshape(self.grid.shape))

    def x_field(self, n: int) -> ScalarField:
        return ScalarField(self.grid, self.x[n].reshape(self.grid.shape))


def num_steps_for(horizon: float, dt: float) -> int:
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigurationError(
            f"dt {dt} does not evenly divide the horizon {horizon}"
        )
    return n


def _resolve_time_field(value: TimeField, n_steps: int, grid: SpatialGrid, name: str) -> Optional[np.ndarray]:
    """Normalize a source term to shape (n_steps+1, grid.size) or None."""
    if value is None:
        return None
    if isinstance(value, ScalarField):
        if value.grid != grid:
            raise ConfigurationError(f"{name} lives on a different grid")
        return np.tile(value.values.ravel(), (n_steps + 1, 1))
    arr = np.asarray(value, dtype=float)
    expected = (n_steps + 1, grid.size)
    if arr.shape == (n_steps + 1, *grid.shape):
        arr = arr.reshape(expected)
    if arr.shape != expected:
        raise ConfigurationError(
            f"{name} has shape {arr.shape}, expected {expected} or {(n_steps + 1, *grid.shape)}"
        )
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


class _StepLinearOperator:
    """Linearization of one implicit step around a frozen state z.

        J = I - dt Lap diag(gamma'(z) + eps_d) + dt diag(G_eps'(z) + f + mu)

    Provides solves with J and its exact transpose; the dual integrator is the
    transpose of this operator step by step.
    """

    def __init__(self, ws: "_ForwardWorkspace", z_frozen: np.ndarray):
        dt = ws.dt
        if ws.ionic_active:
            _, slope = yosida_value_and_slope(ws.ionic, ws.yosida_epsilon, z_frozen)
        else:
            slope = 0.0
        self.diag = 1.0 + dt * (ws.zero_order + slope)
        self.ws = ws
        self._lu = None
        self._banded = None
        self._banded_t = None
        if not ws.diffusion_on:
            return
        a = gamma_prime(ws.law, z_frozen) + ws.eps_d
        if ws.grid.dimension == 1:
            n = ws.grid.size
            h2 = ws.grid.spacing[0] ** 2
            q = -dt * a / h2               # both off-diagonal entries of column j
            d = self.diag + 2.0 * dt * a / h2
            ab = np.zeros((3, n))
            ab[0, 1:] = q[1:]
            ab[1, :] = d
            ab[2, :-1] = q[:-1]
            abt = np.zeros((3, n))
            abt[0, 1:] = q[:-1]
            abt[1, :] = d
            abt[2, :-1] = q[1:]
            self._banded = ab
            self._banded_t = abt
        else:
            lap = laplacian_matrix(ws.grid)
            j = (
                scipy.sparse.identity(ws.grid.size, format="csr")
                - dt * (lap @ scipy.sparse.diags(a))
                + scipy.sparse.diags(self.diag - 1.0)
            )
            self._lu = scipy.sparse.linalg.splu(j.tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if not self.ws.diffusion_on:
            return rhs / self.diag
        if self._banded is not None:
            return scipy.linalg.solve_banded((1, 1), self._banded, rhs)
        return self._lu.solve(rhs)

    def solve_transpose(self, rhs: np.ndarray) -> np.ndarray:
        if not self.ws.diffusion_on:
            return rhs / self.diag
        if self._banded_t is not None:
            return scipy.linalg.solve_banded((1, 1), self._banded_t, rhs)
        return self._lu.solve(rhs, trans="T")


class _ForwardWorkspace:
    """Per-(problem, params, path) precomputations shared by all steps."""

    def __init__(self, problem: StateProblem, params: StepperParams, path: Optional[WienerPath]):
        self.problem = problem
        self.params = params
        self.grid = problem.grid
        self.dt = params.dt
        self.eps_d = params.diffusion_regularization
        self.yosida_epsilon = params.yosida_epsilon
        self.law = problem.diffusion
        self.ionic = problem.ionic
        self.ionic_active = problem.ionic is not None and problem.ionic.scale > 0.0
        if self.ionic_active:
            YosidaParam.for_cubic(problem.ionic, params.yosida_epsilon)
        self.diffusion_on = problem.diffusion_enabled
        self.n_steps = num_steps_for(problem.horizon, params.dt)
        self.times = uniform_time_grid(problem.horizon, self.n_steps)
        m = self.grid.size

        if problem.noise_active:
            if path is None:
                raise ConfigurationError("problem has active noise but no path was given")
            if path.num_steps != self.n_steps or not math.isclose(
                path.times[-1], problem.horizon, rel_tol=1e-9
            ):
                raise ConfigurationError(
                    "path time grid does not match the problem horizon and dt"
                )
            self.w = noise_history(path, problem.noise)
            sup_w = float(np.max(np.abs(self.w)))
            if sup_w > PATH_SUP_W_LIMIT:
                raise NumericError(
                    "path aborted: sup |W| exceeds the overflow guard",
                    sup_w=sup_w,
                    limit=PATH_SUP_W_LIMIT,
                )
            mu = ito_correction_field(problem.noise).values.ravel()
        else:
            self.w = np.zeros((self.n_steps + 1, m))
            mu = np.zeros(m)
        self.exp_pos = np.exp(self.w)
        self.exp_neg = np.exp(-self.w)

        f = problem.damping.values.ravel() if problem.damping is not None else np.zeros(m)
        self.zero_order = f + mu
        self.damping_flat = f

        forcing = _resolve_time_field(problem.forcing, self.n_steps, self.grid, "forcing")
        control = _resolve_time_field(problem.control, self.n_steps, self.grid, "control")
        if forcing is None and control is None:
            self.source = None
        elif forcing is None:
            self.source = control
        elif control is None:
            self.source = forcing
        else:
            self.source = forcing + control

    def source_row(self, n: int) -> Optional[np.ndarray]:
        return None if self.source is None else self.source[n]

    def _residual(self, z: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        res = z + self.dt * self.zero_order * z - rhs
        if self.ionic_active:
            gval, _ = yosida_value_and_slope(self.ionic, self.yosida_epsilon, z)
            res = res + self.dt * gval
        if self.diffusion_on:
            flux = gamma_eval(self.law, z) + self.eps_d * z
            res = res - self.dt * apply_laplacian(self.grid, flux.reshape(self.grid.shape)).ravel()
        return res

    def step(self, n: int, y_flat: np.ndarray) -> tuple[np.ndarray, int]:
        """Advance y from node n to n+1; returns (z_{n+1}, newton_iterations)."""
        rhs = self.exp_pos[n + 1] * y_flat
        src = self.source_row(n + 1)
        if src is not None:
            rhs = rhs + self.dt * src
        z = self.exp_pos[n + 1] * y_flat
        scale = max(1.0, float(np.max(np.abs(rhs))))
        tol = self.params.newton_tol * scale
        res = self._residual(z, rhs)
        res_norm = float(np.max(np.abs(res)))
        for it in range(self.params.newton_max_iters):
            if res_norm <= tol:
                return z, it
            op = _StepLinearOperator(self, z)
            delta = op.solve(-res)
            lam = 1.0
            for _ in range(20):
                z_try = z + lam * delta
                res_try = self._residual(z_try, rhs)
                norm_try = float(np.max(np.abs(res_try)))
                if norm_try <= (1.0 - 1e-4 * lam) * res_norm:
                    z, res, res_norm = z_try, res_try, norm_try
                    break
                lam *= 0.5
            else:
                raise NumericError(
                    "Newton line search stalled; consider a smaller dt",
                    step=n,
                    residual=res_norm,
                )
        raise NumericError(
            "Newton did not converge within the iteration budget; "
            "consider a smaller dt",
            step=n,
            residual=res_norm,
            iterations=self.params.newton_max_iters,
        )


def step_rescaled(
    y_n: ScalarField,
    n: int,
    problem: StateProblem,
    params: StepperParams,
    path: Optional[WienerPath] = None,
) -> ScalarField:
    """One implicit step of the transformed state from node n to n+1."""
    if y_n.grid != problem.grid:
        raise ConfigurationError("state lives on a different grid")
    ws = _ForwardWorkspace(problem, params, path)
    if not 0 <= n < ws.n_steps:
        raise ConfigurationError(f"step index {n} outside 0..{ws.n_steps - 1}")
    z, _ = ws.step(n, y_n.values.ravel())
    y_next = ws.exp_neg[n + 1] * z
    return ScalarField(problem.grid, y_next.reshape(problem.grid.shape))


def solve_forward(
    problem: StateProblem,
    params: StepperParams,
    path: Optional[WienerPath] = None,
) -> StateSolution:
    """Integrate the full trajectory for one noise realization.

    Deterministic for fixed (problem, params, path). Diagnostics record the
    per-step Newton iteration counts, running sup norms and the discrete
    energy pieces sup_t |y|_2^2 and sum_n dt |grad gamma(X)|_2^2.
    """
    ws = _ForwardWorkspace(problem, params, path)
    m = problem.grid.size
    n_steps = ws.n_steps
    y = np.empty((n_steps + 1, m))
    y[0] = problem.initial.values.ravel()
    newton_iters = np.zeros(n_steps, dtype=int)
    grad_energy = 0.0
    vol = problem.grid.cell_volume
    for n in range(n_steps):
        try:
            z, iters = ws.step(n, y[n])
        except NumericError as err:
            err.details.setdefault("step", n)
            raise
        newton_iters[n] = iters
        y[n + 1] = ws.exp_neg[n + 1] * z
        if ws.diffusion_on:
            grad_energy += ws.dt * _dirichlet_grad_sq(
                problem.grid, gamma_eval(ws.law, z)
            )
    x = ws.exp_pos * y
    if not np.all(np.isfinite(y)):
        raise NumericError("trajectory contains non-finite values")
    sup_y = np.max(np.abs(y), axis=1)
    diagnostics = {
        "newton_iterations": newton_iters,
        "sup_y": sup_y,
        "sup_w": float(np.max(np.abs(ws.w))),
        "energy_sup_l2sq": float(np.max(np.sum(y**2, axis=1) * vol)),
        "energy_grad_gamma": float(grad_energy),
    }
    return StateSolution(
        grid=problem.grid,
        times=ws.times,
        y=y,
        x=x,
        path=path if problem.noise_active else None,
        diagnostics=diagnostics,
    )


def _dirichlet_grad_sq(grid: SpatialGrid, flat: np.ndarray) -> float:
    """|grad v|_2^2 by forward differences with zero boundary ghosts."""
    v = flat.reshape(grid.shape)
    total = 0.0
    vol = grid.cell_volume
    for axis in range(grid.dimension):
        h = grid.spacing[axis]
        padded = np.concatenate(
            [
                np.zeros_like(np.take(v, [0], axis=axis)),
                v,
                np.zeros_like(np.take(v, [0], axis=axis)),
            ],
            axis=axis,
        )
        diffs = np.diff(padded, axis=axis) / h
        total += float(np.sum(diffs**2) * vol)
    return total


def scalar_sde_oracle(
    problem: StateProblem,
    path: Optional[WienerPath],
    dt: Optional[float] = None,
) -> np.ndarray:
    """Explicit per-node reference integrator for the diffusion-off reduction.

    Each grid node carries an independent scalar equation
    dX = (-G(X) - f X + F + u) dt + X dW(t, xi), integrated by the
    Euler-Maruyama rule on the path's grid. Used as a verification oracle.
    """
    if problem.diffusion_enabled:
        raise ConfigurationError("the scalar oracle requires diffusion_enabled=False")
    m = problem.grid.size
    if problem.noise_active:
        if path is None:
            raise ConfigurationError("problem has active noise but no path was given")
        n_steps = path.num_steps
        step = path.dt
        if dt is not None and not math.isclose(step, dt, rel_tol=1e-9):
            raise ConfigurationError(
                f"requested dt {dt} does not match the path step {step}"
            )
        w = noise_history(path, problem.noise)
    else:
        if dt is None:
            raise ConfigurationError("dt is required when noise is disabled")
        step = dt
        n_steps = num_steps_for(problem.horizon, dt)
        w = np.zeros((n_steps + 1, m))
    f = problem.damping.values.ravel() if problem.damping is not None else np.zeros(m)
    forcing = _resolve_time_field(problem.forcing, n_steps, problem.grid, "forcing")
    control = _resolve_time_field(problem.control, n_steps, problem.grid, "control")

    x = np.empty((n_steps + 1, m))
    x[0] = problem.initial.values.ravel()
    for n in range(n_steps):
        drift = -f * x[n]
        if problem.ionic is not None:
            drift = drift - ionic_eval(problem.ionic, x[n])
        if forcing is not None:
            drift = drift + forcing[n]
        if control is not None:
            drift = drift + control[n]
        x[n + 1] = x[n] + step * drift + x[n] * (w[n + 1] - w[n])
    return x


def strong_solution_residual(
    solution: StateSolution,
    problem: StateProblem,
    path: Optional[WienerPath] = None,
    checkpoint_stride: int = 1,
) -> float:
    """Defect of the integral identity satisfied by the physical state:

        X(t) = X(0) + int_0^t (Lap gamma(X) - G(X) - f X + F + u) ds
                    + int_0^t X dW,

    with the drift integral by the trapezoid rule and the noise integral by
    left-point sums of the per-mode increments. Returns the maximum over
    checkpoints of the dual-space norm of the defect.
    """
    if path is None:
        path = solution.path
    n_steps = solution.num_steps
    grid = solution.grid
    x = solution.x
    dt = float(solution.times[1] - solution.times[0])

    drift = np.zeros_like(x)
    if problem.ionic is not None:
        drift -= ionic_eval(problem.ionic, x)
    if problem.damping is not None:
        drift -= problem.damping.values.ravel()[None, :] * x
    forcing = _resolve_time_field(problem.forcing, n_steps, grid, "forcing")
    control = _resolve_time_field(problem.control, n_steps, grid, "control")
    if forcing is not None:
        drift += forcing
    if control is not None:
        drift += control
    if problem.diffusion_enabled:
        flux = gamma_eval(problem.diffusion, x)
        drift += (laplacian_matrix(grid) @ flux.T).T

    # Cumulative trapezoid of the drift and left-point sums of X dW.
    drift_cum = np.zeros_like(x)
    drift_cum[1:] = np.cumsum(0.5 * dt * (drift[:-1] + drift[1:]), axis=0)
    ito_cum = np.zeros_like(x)
    if problem.noise_active:
        if path is None:
            raise ConfigurationError("noisy solution requires its path for the residual")
        w = noise_history(path, problem.noise)
        ito_cum[1:] = np.cumsum(x[:-1] * np.diff(w, axis=0), axis=0)

    checkpoints = list(range(checkpoint_stride, n_steps + 1, checkpoint_stride))
    if checkpoints[-1] != n_steps:
        checkpoints.append(n_steps)
    worst = 0.0
    vol = grid.cell_volume
    for k in checkpoints:
        defect = x[k] - x[0] - drift_cum[k] - ito_cum[k]
        inv = poisson_solve_array(grid, defect.reshape(grid.shape)).ravel()
        worst = max(worst, math.sqrt(max(float(vol * np.dot(inv, defect)), 0.0)))
    return worst


def write_trajectory_csv(solution: StateSolution, dest, stride: int = 1) -> None:
    """Columns: t, node_index, y, X (flat C-order node indices)."""
    rows = list(range(0, solution.num_steps + 1, stride))
    if rows[-1] != solution.num_steps:
        rows.append(solution.num_steps)
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "node_index", "y", "X"])
        for n in rows:
            t = repr(float(solution.times[n]))
            for i in range(solution.grid.size):
                writer.writerow([t, i, repr(float(solution.y[n, i])), repr(float(solution.x[n, i]))])

"""Bound-constrained tracking control of the forward dynamics.

The cost is the mean over noise paths of

    int_0^T ( |X - v1|_2^2 + (alpha/2) |u|_2^2 ) dt + |X(T) - v2|_2^2,

minimized over controls with |u| <= M pointwise. Controls are piecewise
constant per step: the value indexed by node n acts on the step ending at
t_n, so index 0 is inert. The tracking integral uses the trapezoid rule over
nodes; the control energy uses the step rule, which is exact for piecewise
constant controls.

Gradients come from the discrete adjoint: each backward step is the exact
transpose of the linearized forward step, so the duality identity and the
directional-derivative check hold to machine precision, and the first-order
condition takes the pointwise feedback form

    u = clamp(-(1/alpha) exp(-W) p, [-M, M]).

The optimizer is projected gradient with Armijo backtracking (spectral step
initialization); at alpha = 0 the sign of the adjoint state gives the
switching control, see ``bang_bang_refine``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, NumericError
from .grid import ScalarField
from .noise import WienerPath, sample_path, uniform_time_grid
from .solver import (
    StateProblem,
    StateSolution,
    StepperParams,
    _ForwardWorkspace,
    _StepLinearOperator,
    num_steps_for,
    solve_forward,
)

ControlLike = Union["ControlField", np.ndarray, None]


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """A tracking problem: state dynamics, targets, weights and noise scope.

    Either ``path`` (one frozen realization) or ``seeds`` (sample-average over
    an ensemble) fixes how the expectation is handled; with noise disabled
    neither is needed.
    """

    state: StateProblem
    running_target: ScalarField
    terminal_target: ScalarField
    alpha: float
    bound: float
    stepper: StepperParams
    path: Optional[WienerPath] = None
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.alpha < 0.0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.bound <= 0.0:
            raise ConfigurationError(f"bound must be positive, got {self.bound}")
        if self.running_target.grid != self.state.grid or self.terminal_target.grid != self.state.grid:
            raise ConfigurationError("targets live on a different grid")
        if self.state.control is not None:
            raise ConfigurationError("the state problem must not carry a control of its own")
        if self.state.noise_active:
            if self.path is not None and self.seeds:
                raise ConfigurationError("give either a frozen path or seeds, not both")
            if self.path is None and not self.seeds:
                raise ConfigurationError("noisy problems need a frozen path or a seed list")

    @property
    def num_steps(self) -> int:
        return num_steps_for(self.state.horizon, self.stepper.dt)

    def paths(self) -> list[Optional[WienerPath]]:
        if not self.state.noise_active:
            return [None]
        if self.path is not None:
            return [self.path]
        grid_t = uniform_time_grid(self.state.horizon, self.num_steps)
        return [sample_path(self.state.noise, grid_t, seed) for seed in self.seeds]


@dataclass(frozen=True, eq=False)
class ControlField:
    """Admissible control values on the time nodes, |u| <= bound pointwise."""

    values: np.ndarray
    bound: float

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise NumericError("control contains non-finite values")
        if float(np.max(np.abs(arr), initial=0.0)) > self.bound * (1.0 + 1e-12):
            raise ConfigurationError("control violates the pointwise bound")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(eq=False)
class AdjointSolution:
    """Backward multiplier trajectory.

    ``terminal_value`` is the exact terminal condition 2 (X(T) - v2).
    ``p`` is the multiplier trajectory (the node-N entry is the terminal
    condition propagated through the transpose of the final step, which is
    what makes the gradient exact at the discrete level). ``weighted`` stores
    exp(-W) p, the quantity that pairs with control directions.
    """

    times: np.ndarray
    p: np.ndarray
    weighted: np.ndarray
    terminal_value: np.ndarray


@dataclass
class OptimizerParams:
    tol: float = 1e-4
    max_iters: int = 200
    armijo: float = 1e-4
    max_halvings: int = 30
    initial_step: float = 1.0
    spectral_steps: bool = True
    initial_control: Optional[np.ndarray] = None


@dataclass(eq=False)
class OptimizerReport:
    costs: list[float]
    step_sizes: list[float]
    residuals: list[float]
    control: ControlField
    termination: str
    iterations: int
    forward_solves: int

    def monotone(self) -> bool:
        return all(b <= a + 1e-14 for a, b in zip(self.costs, self.costs[1:]))


@dataclass(eq=False)
class BangBangResult:
    control: ControlField
    deadband: float
    deadband_fraction: float
    saturated_fraction: float


# ---------------------------------------------------------------------------
# Quadrature helpers (shared discrete inner products)
# ---------------------------------------------------------------------------

def _trapezoid_weights(n_steps: int) -> np.ndarray:
    w = np.ones(n_steps + 1)
    w[0] = w[-1] = 0.5
    return w


def _control_inner(problem: ControlProblem, a: np.ndarray, b: np.ndarray) -> float:
    """L2((0,T) x O) pairing of control-space arrays; node 0 is inert."""
    vol = problem.state.grid.cell_volume
    return float(problem.stepper.dt * vol * np.sum(a[1:] * b[1:]))


def _control_norm(problem: ControlProblem, a: np.ndarray) -> float:
    return math.sqrt(max(_control_inner(problem, a, a), 0.0))


def _control_values(problem: ControlProblem, u: ControlLike) -> np.ndarray:
    m = problem.state.grid.size
    shape = (problem.num_steps + 1, m)
    if u is None:
        return np.zeros(shape)
    if isinstance(u, ControlField):
        u = u.values
    arr = np.asarray(u, dtype=float)
    if arr.shape == (shape[0], *problem.state.grid.shape):
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise ConfigurationError(f"control has shape {arr.shape}, expected {shape}")
    return arr


def solve_all_forward(problem: ControlProblem, u: ControlLike) -> list[StateSolution]:
    values = _control_values(problem, u)
    controlled = problem.state.with_control(values)
    return [solve_forward(controlled, problem.stepper, p) for p in problem.paths()]


# ---------------------------------------------------------------------------
# Cost, linearization, adjoint
# ---------------------------------------------------------------------------

def cost_psi(problem: ControlProblem, u: ControlLike, solutions: Sequence[StateSolution]) -> float:
    """Sample average of the tracking cost plus the control energy."""
    paths = problem.paths()
    if len(solutions) != len(paths):
        raise ConfigurationError(
            f"{len(solutions)} solutions supplied for {len(paths)} paths"
        )
    values = _control_values(problem, u)
    dt = problem.stepper.dt
    vol = problem.state.grid.cell_volume
    v1 = problem.running_target.values.ravel()
    v2 = problem.terminal_target.values.ravel()
    tw = _trapezoid_weights(problem.num_steps)
    track = 0.0
    for sol in solutions:
        mis = sol.x - v1[None, :]
        track += float(dt * np.dot(tw, np.sum(mis**2, axis=1)) * vol)
        track += float(vol * np.sum((sol.x[-1] - v2) ** 2))
    track /= len(solutions)
    energy = 0.5 * problem.alpha * dt * vol * float(np.sum(values[1:] ** 2))
    return track + energy


def _workspace(problem: ControlProblem, path: Optional[WienerPath]) -> _ForwardWorkspace:
    return _ForwardWorkspace(problem.state, problem.stepper, path)


def solve_variation(
    problem: ControlProblem,
    y_star: StateSolution,
    path: Optional[WienerPath],
    direction_u: np.ndarray,
) -> np.ndarray:
    """Derivative of the control-to-state map at y_star in a given direction.

    Frozen-coefficient backward-Euler on the same time grid as the forward
    solver: each step applies the inverse of the forward step's linearization
    around the converged state. Returns the variation of y, shape (N+1, m).
    """
    ws = _workspace(problem, path)
    d = _control_values(problem, direction_u)
    n_steps = ws.n_steps
    m = problem.state.grid.size
    zeta = np.zeros((n_steps + 1, m))
    for n in range(n_steps):
        op = _StepLinearOperator(ws, y_star.x[n + 1])
        rhs = ws.exp_pos[n + 1] * zeta[n] + ws.dt * d[n + 1]
        zeta[n + 1] = ws.exp_neg[n + 1] * op.solve(rhs)
    return zeta


def solve_adjoint(
    problem: ControlProblem,
    y_star: StateSolution,
    path: Optional[WienerPath],
) -> AdjointSolution:
    """Backward dual trajectory by the exact transpose of the variation steps.

    Seeded at the terminal condition 2 (X(T) - v2), driven by the running
    source 2 (X - v1), and weighted with exp(-W) so that the pairing of the
    returned multipliers with a control direction equals the directional
    derivative of the cost exactly at the discrete level.
    """
    ws = _workspace(problem, path)
    n_steps = ws.n_steps
    m = problem.state.grid.size
    x = y_star.x
    v1 = problem.running_target.values.ravel()
    v2 = problem.terminal_target.values.ravel()
    tw = _trapezoid_weights(n_steps)
    dt = ws.dt

    q = np.zeros((n_steps + 1, m))
    terminal = 2.0 * (x[n_steps] - v2)
    for n in range(n_steps, 0, -1):
        src = tw[n] * dt * 2.0 * (x[n] - v1)
        if n == n_steps:
            src = src + terminal
        else:
            src = src + np.exp(ws.w[n + 1] - ws.w[n]) * q[n + 1]
        op = _StepLinearOperator(ws, x[n])
        q[n] = op.solve_transpose(src)
    # Continuation to node 0 (never enters the gradient; diagnostic only).
    q[0] = np.exp(ws.w[1] - ws.w[0]) * q[1] + tw[0] * dt * 2.0 * (x[0] - v1)
    p = ws.exp_pos * q
    return AdjointSolution(
        times=ws.times.copy(),
        p=p,
        weighted=ws.exp_neg * p,
        terminal_value=terminal,
    )


def gradient_field(
    u: ControlLike,
    adjoint: AdjointSolution,
    alpha: float,
    problem: Optional[ControlProblem] = None,
) -> np.ndarray:
    """Descent direction density exp(-W) p + alpha u on the control nodes."""
    if problem is not None:
        u = _control_values(problem, u)
    elif u is None:
        u = np.zeros_like(adjoint.weighted)
    elif isinstance(u, ControlField):
        u = u.values
    u = np.asarray(u, dtype=float)
    if u.shape != adjoint.weighted.shape:
        raise ConfigurationError(
            f"control shape {u.shape} does not match the adjoint grid {adjoint.weighted.shape}"
        )
    return adjoint.weighted + alpha * u


def project_control(values: Union[np.ndarray, ControlField], bound: float) -> ControlField:
    """Pointwise clamp onto [-bound, bound]; idempotent, non-expansive."""
    if bound <= 0.0:
        raise ConfigurationError(f"bound must be positive, got {bound}")
    if isinstance(values, ControlField):
        values = values.values
    return ControlField(np.clip(np.asarray(values, dtype=float), -bound, bound), bound)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def _mean_weighted_multiplier(
    problem: ControlProblem,
    solutions: Sequence[StateSolution],
    paths: Sequence[Optional[WienerPath]],
) -> np.ndarray:
    acc = None
    for sol, path in zip(solutions, paths):
        adj = solve_adjoint(problem, sol, path)
        acc = adj.weighted if acc is None else acc + adj.weighted
    return acc / len(solutions)


def _fixed_point_residual(problem: ControlProblem, u: np.ndarray, qbar: np.ndarray) -> float:
    target = np.clip(-qbar / problem.alpha, -problem.bound, problem.bound)
    target[0] = u[0]
    return _control_norm(problem, u - target) / max(1.0, _control_norm(problem, u))


def optimize(problem: ControlProblem, params: Optional[OptimizerParams] = None) -> OptimizerReport:
    """Projected gradient descent with Armijo backtracking.

    Iterates u <- clamp(u - s g) with g = mean_paths(exp(-W) p) + alpha u;
    terminates when the fixed-point residual
    |u - clamp(-(1/alpha) exp(-W) p)| / max(1, |u|) drops below ``tol`` or the
    iteration budget is reached. Accepted steps never increase the cost.
    """
    if problem.alpha <= 0.0:
        raise ConfigurationError(
            "optimize requires alpha > 0; use bang_bang_refine for the limit case"
        )
    params = params or OptimizerParams()
    paths = problem.paths()
    u = _control_values(problem, params.initial_control)
    u = np.clip(u, -problem.bound, problem.bound)
    u[0] = 0.0

    def forward(ctrl: np.ndarray) -> list[StateSolution]:
        controlled = problem.state.with_control(ctrl)
        return [solve_forward(controlled, problem.stepper, p) for p in paths]

    solves = 0
    sols = forward(u)
    solves += len(paths)
    cost = cost_psi(problem, u, sols)
    qbar = _mean_weighted_multiplier(problem, sols, paths)
    grad = qbar + problem.alpha * u
    grad[0] = 0.0
    residual = _fixed_point_residual(problem, u, qbar)

    costs = [cost]
    residuals = [residual]
    step_sizes: list[float] = []
    prev_u = prev_grad = None
    step = params.initial_step
    termination = "converged" if residual <= params.tol else "max_iterations"
    iterations = 0

    for _ in range(params.max_iters):
        if residual <= params.tol:
            termination = "converged"
            break
        if params.spectral_steps and prev_u is not None:
            du = u - prev_u
            dg = grad - prev_grad
            denom = _control_inner(problem, du, dg)
            if denom > 0.0:
                step = _control_inner(problem, du, du) / denom
            else:
                step = 2.0 * step
            step = min(max(step, 1e-8), 1e6)
        accepted = False
        s = step
        for _ in range(params.max_halvings + 1):
            u_try = np.clip(u - s * grad, -problem.bound, problem.bound)
            u_try[0] = 0.0
            predicted = _control_inner(problem, grad, u - u_try)
            sols_try = forward(u_try)
            solves += len(paths)
            cost_try = cost_psi(problem, u_try, sols_try)
            if cost_try <= cost - params.armijo * predicted:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            raise NumericError(
                "projected-gradient line search failed",
                halvings=params.max_halvings,
                cost=cost,
                residual=residual,
            )
        prev_u, prev_grad = u, grad
        u, sols, cost, step = u_try, sols_try, cost_try, s
        qbar = _mean_weighted_multiplier(problem, sols, paths)
        grad = qbar + problem.alpha * u
        grad[0] = 0.0
        residual = _fixed_point_residual(problem, u, qbar)
        costs.append(cost)
        residuals.append(residual)
        step_sizes.append(s)
        iterations += 1
        termination = "converged" if residual <= params.tol else "max_iterations"

    return OptimizerReport(
        costs=costs,
        step_sizes=step_sizes,
        residuals=residuals,
        control=ControlField(u, problem.bound),
        termination=termination,
        iterations=iterations,
        forward_solves=solves,
    )


def bang_bang_refine(
    problem: ControlProblem,
    adjoint: Union[AdjointSolution, np.ndarray],
    bound: Optional[float] = None,
    deadband: Optional[float] = None,
) -> BangBangResult:
    """Switching control from the sign of the adjoint state:

    -M where p is decisively positive, +M where decisively negative, 0 inside
    the deadband |p| <= delta (default 1e-8 sup |p|), which stands in for the
    measure-zero set p = 0.
    """
    p = adjoint.p if isinstance(adjoint, AdjointSolution) else np.asarray(adjoint, dtype=float)
    m_bound = problem.bound if bound is None else float(bound)
    if m_bound <= 0.0:
        raise ConfigurationError(f"bound must be positive, got {m_bound}")
    sup_p = float(np.max(np.abs(p), initial=0.0))
    delta = 1e-8 * sup_p if deadband is None else float(deadband)
    u = np.where(p > delta, -m_bound, np.where(p < -delta, m_bound, 0.0))
    u[0] = 0.0
    active = p[1:]
    dead = float(np.mean(np.abs(active) <= delta)) if active.size else 1.0
    saturated = float(np.mean(np.abs(u[1:]) >= 0.99 * m_bound)) if active.size else 0.0
    return BangBangResult(
        control=ControlField(u, m_bound),
        deadband=delta,
        deadband_fraction=dead,
        saturated_fraction=saturated,
    )

"""Truncated spatial Brownian forcing.

The driving noise is W(t, xi) = sum_j mu_j e_j(xi) beta_j(t) over a finite set
of spatial modes (discrete Laplacian eigenfunctions by default) with
independent scalar Brownian motions beta_j. This module samples paths,
mollifies them in time, and provides the derived fields the solver needs: the
pointwise exponential factors exp(+/-W) and the quadratic correction field
mu(xi) = 1/2 sum_j mu_j^2 e_j(xi)^2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericError
from .grid import EigenPair, ScalarField, SpatialGrid, laplacian_eigenpairs

EXP_OVERFLOW_LIMIT = 700.0


def uniform_time_grid(horizon: float, num_steps: int) -> np.ndarray:
    if horizon <= 0.0 or num_steps < 1:
        raise ConfigurationError(
            f"need horizon > 0 and num_steps >= 1, got {horizon}, {num_steps}"
        )
    return np.linspace(0.0, horizon, num_steps + 1)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Finite mode expansion of the driving noise on a grid."""

    grid: SpatialGrid
    coefficients: tuple[float, ...]
    modes: tuple[EigenPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(m) for m in self.coefficients))
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.coefficients) != len(self.modes):
            raise ConfigurationError(
                f"{len(self.coefficients)} coefficients for {len(self.modes)} modes"
            )
        for m in self.modes:
            if m.eigenfunction.grid != self.grid:
                raise ConfigurationError("noise mode lives on a different grid")

    @property
    def mode_count(self) -> int:
        return len(self.coefficients)

    @cached_property
    def _mode_matrix(self) -> np.ndarray:
        """Stacked eigenfunction values, shape (J, grid.size)."""
        if self.mode_count == 0:
            return np.zeros((0, self.grid.size))
        return np.stack([m.eigenfunction.values.ravel() for m in self.modes])

    @cached_property
    def convergence_sum(self) -> float:
        """sum_j mu_j^2 (sup |e_j|)^2, recorded as a summability diagnostic."""
        if self.mode_count == 0:
            return 0.0
        sups = np.max(np.abs(self._mode_matrix), axis=1)
        return float(np.sum(np.square(self.coefficients) * sups**2))

    @classmethod
    def default(
        cls,
        grid: SpatialGrid,
        mode_count: int = 8,
        decay: float = 1.5,
        amplitude: float = 1.0,
    ) -> "NoiseModel":
        """Power-law spectrum mu_j = amplitude * j^-decay on eigenmodes."""
        if mode_count == 0:
            return cls(grid, (), ())
        modes = laplacian_eigenpairs(grid, mode_count)
        mus = tuple(amplitude * (j + 1) ** (-decay) for j in range(mode_count))
        return cls(grid, mus, tuple(modes))


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Per-mode Brownian values on a uniform time grid."""

    times: np.ndarray
    beta: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        beta = np.array(self.beta, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigurationError("time grid must hold at least two nodes")
        steps = np.diff(times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ConfigurationError("time grid must be uniform and increasing")
        if beta.ndim != 2 or beta.shape[1] != times.size:
            raise ConfigurationError(
                f"beta shape {beta.shape} does not match {times.size} time nodes"
            )
        if not np.all(np.isfinite(beta)):
            raise NumericError("path contains non-finite values")
        times.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "beta", beta)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def num_steps(self) -> int:
        return self.times.size - 1

    @property
    def mode_count(self) -> int:
        return self.beta.shape[0]

    def restrict(self, factor: int) -> "WienerPath":
        """Keep every ``factor``-th node: the exact coarse-grid restriction of
        the same Brownian path (used for step-size ladders on common noise)."""
        if factor < 1 or self.num_steps % factor != 0:
            raise ConfigurationError(
                f"cannot restrict {self.num_steps} steps by factor {factor}"
            )
        return WienerPath(self.times[::factor], self.beta[:, ::factor], seed=self.seed)


def sample_path(model: NoiseModel, time_grid: np.ndarray, seed: int | None) -> WienerPath:
    """Draw one path: independent N(0, dt) increments per mode, reproducible
    for a given seed."""
    times = np.asarray(time_grid, dtype=float)
    n_steps = times.size - 1
    rng = np.random.default_rng(seed)
    if model.mode_count == 0:
        return WienerPath(times, np.zeros((0, times.size)), seed=seed)
    dt = float(times[1] - times[0])
    increments = rng.normal(0.0, math.sqrt(dt), size=(model.mode_count, n_steps))
    beta = np.concatenate(
        [np.zeros((model.mode_count, 1)), np.cumsum(increments, axis=1)], axis=1
    )
    return WienerPath(times, beta, seed=seed)


def noise_history(path: WienerPath, model: NoiseModel) -> np.ndarray:
    """W at every time node, shape (N+1, grid.size)."""
    if path.mode_count != model.mode_count:
        raise ConfigurationError(
            f"path has {path.mode_count} modes, model has {model.mode_count}"
        )
    if model.mode_count == 0:
        return np.zeros((path.times.size, model.grid.size))
    weighted = np.asarray(model.coefficients)[:, None] * model._mode_matrix
    return path.beta.T @ weighted


def evaluate_W(path: WienerPath, model: NoiseModel, n: int) -> ScalarField:
    """The noise field at time node n."""
    if not 0 <= n < path.times.size:
        raise ConfigurationError(f"time index {n} outside 0..{path.times.size - 1}")
    if path.mode_count != model.mode_count:
        raise ConfigurationError(
            f"path has {path.mode_count} modes, model has {model.mode_count}"
        )
    if model.mode_count == 0:
        return model.grid.zero_field()
    weighted = np.asarray(model.coefficients)[:, None] * model._mode_matrix
    flat = path.beta[:, n] @ weighted
    return ScalarField(model.grid, flat.reshape(model.grid.shape))


def exp_W(path: WienerPath, model: NoiseModel, n: int, sign: int = 1) -> ScalarField:
    """Pointwise exp(sign * W) at time node n; strictly positive."""
    if sign not in (1, -1):
        raise ConfigurationError(f"sign must be +1 or -1, got {sign}")
    w = evaluate_W(path, model, n)
    peak = float(np.max(np.abs(w.values))) if w.values.size else 0.0
    if peak > EXP_OVERFLOW_LIMIT:
        raise NumericError(
            "noise amplitude too large for pointwise exponential", sup_w=peak
        )
    return ScalarField(model.grid, np.exp(sign * w.values))


def ito_correction_field(model: NoiseModel) -> ScalarField:
    """The quadratic correction 1/2 sum_j mu_j^2 e_j(xi)^2 (nonnegative)."""
    if model.mode_count == 0:
        return model.grid.zero_field()
    flat = 0.5 * np.sum(
        np.square(np.asarray(model.coefficients))[:, None] * model._mode_matrix**2,
        axis=0,
    )
    return ScalarField(model.grid, flat.reshape(model.grid.shape))


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

def bump_kernel(s: np.ndarray) -> np.ndarray:
    """The standard compactly supported bump exp(-1/(1-s^2)) on (-1, 1),
    un-normalized."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """Smoothing kernel of width ``epsilon`` (time units), unit mass."""

    epsilon: float
    kernel: Callable[[np.ndarray], np.ndarray] = bump_kernel

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")

    def discrete_weights(self, dt: float) -> np.ndarray:
        """Kernel sampled on the path grid and normalized to unit sum.

        Offsets run over -K..K with K = floor(epsilon/dt); the support is
        contained in [-epsilon, epsilon] by construction.
        """
        if self.epsilon < 2.0 * dt - 1e-12 * dt:
            raise ConfigurationError(
                f"mollifier width {self.epsilon} not resolvable on step {dt}; "
                "need epsilon >= 2*dt"
            )
        k = int(math.floor(self.epsilon / dt + 1e-12))
        offsets = np.arange(-k, k + 1) * dt
        raw = self.kernel(offsets / self.epsilon)
        total = float(np.sum(raw))
        if total <= 0.0:
            raise NumericError("mollifier kernel has nonpositive discrete mass")
        return raw / total

    def kernel_mass(self, dt: float) -> float:
        """Trapezoid mass of the normalized discrete kernel (1 by construction)."""
        return float(np.sum(self.discrete_weights(dt)))


def mollify_path(path: WienerPath, spec: MollifierSpec) -> WienerPath:
    """Per-mode discrete convolution with the sampled kernel.

    The path is extended by its endpoint values outside [0, T] for the
    convolution window, so the output stays aligned with the original grid.
    """
    weights = spec.discrete_weights(path.dt)
    k = (weights.size - 1) // 2
    if path.mode_count == 0:
        return WienerPath(path.times, path.beta.copy(), seed=path.seed)
    padded = np.pad(path.beta, ((0, 0), (k, k)), mode="edge")
    smooth = np.empty_like(path.beta)
    for j in range(path.mode_count):
        smooth[j] = np.convolve(padded[j], weights[::-1], mode="valid")
    return WienerPath(path.times, smooth, seed=path.seed)


def write_path_csv(path: WienerPath, dest) -> None:
    """Columns: t, mode_index, beta."""
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mode_index", "beta"])
        for j in range(path.mode_count):
            for t, b in zip(path.times, path.beta[j]):
                writer.writerow([repr(float(t)), j + 1, repr(float(b))])

"""Uniform tensor grids with homogeneous Dirichlet boundary and the discrete
operators (Laplacian, Poisson inverse) and norms built on them.

Fields store interior node values only; the boundary value 0 is implicit in
every stencil. All types are immutable after construction and every operation
is a pure function, so instances can be shared freely.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConfigurationError, NumericError

POISSON_RTOL = 1e-10


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on an interval (1D) or rectangle (2D).

    ``interior`` counts nodes per axis; spacing is ``extent/(interior+1)`` so
    the boundary nodes sit on the domain edge and carry the value 0.
    """

    dimension: int = 1
    extent: tuple[float, ...] = (1.0,)
    interior: tuple[int, ...] = (99,)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.dimension}")
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))
        object.__setattr__(self, "interior", tuple(int(n) for n in self.interior))
        if len(self.extent) != self.dimension or len(self.interior) != self.dimension:
            raise ConfigurationError(
                f"extent/interior must have {self.dimension} entries, "
                f"got {len(self.extent)}/{len(self.interior)}"
            )
        if any(e <= 0.0 for e in self.extent):
            raise ConfigurationError(f"extent must be positive, got {self.extent}")
        if any(n < 3 for n in self.interior):
            raise ConfigurationError(f"need at least 3 interior points per axis, got {self.interior}")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.extent, self.interior))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.interior

    @property
    def size(self) -> int:
        return int(np.prod(self.interior))

    @property
    def cell_volume(self) -> float:
        """Quadrature weight h^d for the discrete integrals."""
        return float(np.prod(self.spacing))

    def axis_coordinates(self, axis: int = 0) -> np.ndarray:
        h = self.spacing[axis]
        return h * np.arange(1, self.interior[axis] + 1)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Interior node coordinates, meshgrid style in 2D."""
        axes = [self.axis_coordinates(k) for k in range(self.dimension)]
        if self.dimension == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def field(self, values) -> "ScalarField":
        return ScalarField(self, np.asarray(values, dtype=float))

    def zero_field(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def constant_field(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def field_from_function(self, fn: Callable) -> "ScalarField":
        """Sample ``fn(x)`` (1D) or ``fn(x, y)`` (2D) at the interior nodes."""
        return ScalarField(self, np.asarray(fn(*self.coordinates()), dtype=float))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real-valued function on the interior nodes of a grid."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {arr.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise NumericError("field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenpair of the (negative) discrete Dirichlet Laplacian.

    ``apply_laplacian(eigenfunction) == -eigenvalue * eigenfunction`` holds to
    solver tolerance; the eigenfunction has unit discrete L2 norm.
    """

    index: int
    eigenvalue: float
    eigenfunction: ScalarField
    mode: tuple[int, ...] = (1,)


def _require_same_grid(a: ScalarField, b: ScalarField) -> None:
    if a.grid != b.grid:
        raise ConfigurationError("fields live on different grids")


# ---------------------------------------------------------------------------
# Stencil operators (cached per grid; grids are hashable and immutable)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def laplacian_matrix(grid: SpatialGrid) -> scipy.sparse.csr_matrix:
    """Second-order centered Laplacian with zero Dirichlet ghost values, as a
    sparse matrix acting on flattened (C-order) interior values."""
    blocks = []
    for axis in range(grid.dimension):
        n = grid.interior[axis]
        h = grid.spacing[axis]
        main = np.full(n, -2.0 / h**2)
        off = np.full(n - 1, 1.0 / h**2)
        blocks.append(scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csr"))
    if grid.dimension == 1:
        return blocks[0]
    ix = scipy.sparse.identity(grid.interior[0], format="csr")
    iy = scipy.sparse.identity(grid.interior[1], format="csr")
    return (scipy.sparse.kron(blocks[0], iy) + scipy.sparse.kron(ix, blocks[1])).tocsr()


@lru_cache(maxsize=None)
def _poisson_cholesky_1d(grid: SpatialGrid):
    # Banded Cholesky factor of -Laplacian (SPD tridiagonal), upper form.
    n = grid.interior[0]
    h = grid.spacing[0]
    ab = np.zeros((2, n))
    ab[0, 1:] = -1.0 / h**2
    ab[1, :] = 2.0 / h**2
    return scipy.linalg.cholesky_banded(ab)


def apply_laplacian(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """Array-level Laplacian; accepts and returns grid-shaped arrays."""
    flat = laplacian_matrix(grid) @ np.asarray(values, dtype=float).ravel()
    return flat.reshape(grid.shape)


def poisson_solve_array(grid: SpatialGrid, rhs: np.ndarray) -> np.ndarray:
    """Solve -Laplacian(x) = rhs on the grid (array-level)."""
    b = np.asarray(rhs, dtype=float).ravel()
    if grid.dimension == 1:
        x = scipy.linalg.cho_solve_banded((_poisson_cholesky_1d(grid), False), b)
    else:
        # Conjugate gradients on the SPD operator; deterministic for fixed rhs.
        a = -laplacian_matrix(grid)
        x, info = scipy.sparse.linalg.cg(a, b, rtol=POISSON_RTOL, atol=0.0)
        if info != 0:
            residual = float(np.linalg.norm(a @ x - b))
            raise NumericError(
                "Poisson solve did not converge", residual=residual, cg_info=info
            )
    return x.reshape(grid.shape)


# ---------------------------------------------------------------------------
# Public field operations
# ---------------------------------------------------------------------------

def discrete_laplacian(field: ScalarField) -> ScalarField:
    return ScalarField(field.grid, apply_laplacian(field.grid, field.values))


def poisson_solve(rhs: ScalarField) -> ScalarField:
    return ScalarField(rhs.grid, poisson_solve_array(rhs.grid, rhs.values))


def inner_l2(a: ScalarField, b: ScalarField) -> float:
    _require_same_grid(a, b)
    return float(a.grid.cell_volume * np.sum(a.values * b.values))


def norm_l2(field: ScalarField) -> float:
    return math.sqrt(float(field.grid.cell_volume * np.sum(field.values**2)))


def norm_linf(field: ScalarField) -> float:
    return float(np.max(np.abs(field.values))) if field.values.size else 0.0


def norm_hminus1(field: ScalarField) -> float:
    """Dual-space norm sqrt(<(-Lap)^-1 v, v>) of the discrete operator."""
    inv = poisson_solve_array(field.grid, field.values)
    val = float(field.grid.cell_volume * np.sum(inv * field.values))
    # Quadratic form of an SPD inverse; clip the roundoff-negative case.
    return math.sqrt(max(val, 0.0))


def laplacian_eigenpairs(grid: SpatialGrid, count: int) -> list[EigenPair]:
    """First ``count`` eigenpairs of the discrete Dirichlet stencil, sorted by
    ascending eigenvalue of -Laplacian.

    These are exact: sine modes with eigenvalues (2/h^2)(1 - cos(k pi h / L))
    per axis, tensor products in 2D, L2-normalized on the grid.
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    if count > grid.size:
        raise ConfigurationError(
            f"requested {count} eigenpairs but the grid has {grid.size} interior nodes"
        )

    def axis_modes(axis: int):
        n = grid.interior[axis]
        h = grid.spacing[axis]
        L = grid.extent[axis]
        ks = np.arange(1, n + 1)
        lams = (2.0 / h**2) * (1.0 - np.cos(ks * math.pi * h / L))
        x = grid.axis_coordinates(axis)
        # Discrete L2 normalization is exact for sine modes on a uniform grid.
        vecs = math.sqrt(2.0 / L) * np.sin(np.outer(ks, x) * math.pi / L)
        return lams, vecs

    if grid.dimension == 1:
        lams, vecs = axis_modes(0)
        pairs = [(lams[k], (k + 1,), vecs[k]) for k in range(count)]
    else:
        lx, vx = axis_modes(0)
        ly, vy = axis_modes(1)
        candidates = sorted(
            ((lx[i] + ly[j], (i + 1, j + 1)) for i in range(grid.interior[0]) for j in range(grid.interior[1])),
            key=lambda t: (t[0], t[1]),
        )[:count]
        pairs = [
            (lam, mode, np.outer(vx[mode[0] - 1], vy[mode[1] - 1]))
            for lam, mode in candidates
        ]

    return [
        EigenPair(
            index=i + 1,
            eigenvalue=float(lam),
            eigenfunction=ScalarField(grid, np.asarray(vec).reshape(grid.shape)),
            mode=mode,
        )
        for i, (lam, mode, vec) in enumerate(pairs)
    ]


def write_field_csv(field: ScalarField, dest) -> None:
    """Write a field as ``node_index, value`` rows (flat C-order indices)."""
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_index", "value"])
        for i, v in enumerate(field.values.ravel()):
            writer.writerow([i, repr(float(v))])

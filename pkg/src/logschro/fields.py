"""Uniform 1-D grids, role-tagged scalar fields, and second-order finite differences.

Every other module builds on the three objects here: ``Grid1D`` (the mesh),
``ScalarField`` (node-indexed values with a role tag), and the pair of
difference operators ``gradient`` / ``laplacian``.  The trapezoidal rule is
the single quadrature used for all spatial integrals in the package.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import FieldError, GridError

#: Fields whose role is "density" must integrate to 1 within this tolerance.
DENSITY_NORM_TOL = 1e-12


class Role(str, enum.Enum):
    POTENTIAL = "potential"
    DENSITY = "density"
    LOG_DENSITY = "log_density"
    DRIFT = "drift"
    FORCE = "force"
    GENERIC = "generic"


class BoundaryCondition(str, enum.Enum):
    """Boundary handling for the difference operators.

    ``PERIODIC`` identifies the first and last node: a periodic field must
    satisfy ``values[0] == values[-1]``.
    """

    DIRICHLET_ZERO = "dirichlet_zero"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid1D:
    """Uniform mesh of ``n`` nodes on [x_min, x_max], spacing h = (x_max-x_min)/(n-1)."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.x_max <= self.x_min:
            raise GridError(f"invalid bounds: x_max={self.x_max} <= x_min={self.x_min}")
        if self.n < 3:
            raise GridError(f"too few nodes: n={self.n} < 3")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        """Node positions x_min + i*h, strictly increasing."""
        return self.x_min + np.arange(self.n) * self.h

    def index_of(self, x: float) -> int:
        """Index of the node closest to ``x``."""
        i = int(round((x - self.x_min) / self.h))
        return min(max(i, 0), self.n - 1)


def build_grid(x_min: float, x_max: float, n: int) -> Grid1D:
    return Grid1D(x_min, x_max, n)


def trapezoid(values: np.ndarray, grid: Grid1D) -> float:
    """Trapezoidal integral of node values over the grid."""
    v = np.asarray(values, dtype=float)
    return grid.h * (np.sum(v) - 0.5 * (v[0] + v[-1]))


def trapezoid_weights(grid: Grid1D) -> np.ndarray:
    """Per-node quadrature weights: h at interior nodes, h/2 at the two edges."""
    w = np.full(grid.n, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


@dataclass(frozen=True)
class ScalarField:
    """Real-valued function sampled on the nodes of a grid.

    Values must be finite.  A field with role ``DENSITY`` must in addition be
    nonnegative and normalized (trapezoidal integral 1 within 1e-12).
    """

    grid: Grid1D
    values: np.ndarray = field(repr=False)
    role: Role = Role.GENERIC

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n,):
            raise FieldError(f"values shape {v.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise FieldError("field values must be finite")
        if self.role == Role.DENSITY:
            if np.any(v < 0):
                raise FieldError("density values must be nonnegative")
            total = trapezoid(v, self.grid)
            if abs(total - 1.0) > DENSITY_NORM_TOL:
                raise FieldError(f"density integral {total!r} deviates from 1 by more than {DENSITY_NORM_TOL}")

    def with_values(self, values: np.ndarray, role: Role | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.role if role is None else role)


def as_density(grid: Grid1D, values: np.ndarray) -> ScalarField:
    """Clip tiny negatives, normalize, and tag as a density field."""
    v = np.asarray(values, dtype=float).copy()
    v[v < 0] = 0.0
    total = trapezoid(v, grid)
    if total <= 0:
        raise FieldError("cannot normalize a field with nonpositive mass")
    return ScalarField(grid, v / total, Role.DENSITY)


def field_from_function(grid: Grid1D, fn, role: Role = Role.GENERIC) -> ScalarField:
    return ScalarField(grid, fn(grid.x), role)


def gradient(f: ScalarField, bc: BoundaryCondition) -> ScalarField:
    """Second-order first derivative: central differences in the interior.

    Dirichlet edges use one-sided three-point stencils (exact for affine
    fields); periodic edges wrap around using the identified end nodes.
    """
    v = f.values
    h = f.grid.h
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    if bc == BoundaryCondition.PERIODIC:
        # node 0 and node n-1 are the same point; the left neighbor of node 0
        # is node n-2.
        edge = (v[1] - v[-2]) / (2.0 * h)
        out[0] = out[-1] = edge
    else:
        out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return ScalarField(f.grid, out, Role.GENERIC)


def laplacian(f: ScalarField, bc: BoundaryCondition) -> ScalarField:
    """Second-order second derivative: 3-point stencil, exact for quadratics.

    Dirichlet edges use the one-sided four-point stencil (also exact for
    quadratics); periodic edges wrap around.
    """
    v = f.values
    h2 = f.grid.h ** 2
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
    if bc == BoundaryCondition.PERIODIC:
        edge = (v[1] - 2.0 * v[0] + v[-2]) / h2
        out[0] = out[-1] = edge
    elif f.grid.n == 3:
        # only one interior stencil exists; it is exact for quadratics
        out[0] = out[-1] = out[1]
    else:
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    return ScalarField(f.grid, out, Role.GENERIC)


def l1_distance(a: ScalarField, b: ScalarField) -> float:
    """Trapezoidal L1 distance between two fields on the same grid."""
    if a.grid != b.grid:
        raise FieldError("fields live on different grids")
    return trapezoid(np.abs(a.values - b.values), a.grid)


def support_mask(rho: ScalarField, floor: float = 1e-12, edge_margin: int = 0) -> np.ndarray:
    """Boolean mask of nodes where ``rho >= floor``, optionally dropping a margin
    of nodes at each boundary.  All pointwise residual reports share this rule."""
    mask = rho.values >= floor
    if edge_margin > 0:
        mask[:edge_margin] = False
        mask[-edge_margin:] = False
    return mask

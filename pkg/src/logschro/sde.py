"""Euler-Maruyama simulation of the stationary Markov diffusion.

The process is dx = b(x) dt + dW with Wiener increments of variance 2 nu dt.
For a stationary density rho the drift is b = nu * d/dx ln(rho).  Paths are
reflected at the domain edges, which is the stable discrete surrogate for the
strongly inward-pointing true drift of a confined density.

Every path owns an independent counter-based RNG stream (Philox keyed by
(seed, path index)), so results are identical for a fixed seed regardless of
how paths are chunked or parallelized.  The draw order within a path is: one
uniform for the initial position when starting from a density, then one
normal per time step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NodeAtZeroError, SamplingError, StabilityError
from .fields import Grid1D, Role, ScalarField, gradient, BoundaryCondition, trapezoid_weights

_MASK64 = (1 << 64) - 1
#: rho is clamped here before taking the log; only exact zeros at Dirichlet
#: boundary nodes ever reach the clamp for the nodeless densities in scope.
RHO_FLOOR = 1e-300
#: |b*dt| beyond this many grid spacings aborts the run.
DRIFT_STEP_LIMIT = 10.0


@dataclass(frozen=True)
class SdeConfig:
    dt: float
    n_steps: int
    n_paths: int
    burn_in: int = 0
    seed: int = 0
    nu: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise SamplingError("dt must be positive")
        if self.n_paths < 1:
            raise SamplingError("n_paths must be at least 1")
        if self.n_steps < 1:
            raise SamplingError("n_steps must be at least 1")
        if not 0 <= self.burn_in < self.n_steps:
            raise SamplingError("burn_in must satisfy 0 <= burn_in < n_steps")
        if self.nu <= 0:
            raise SamplingError("nu must be positive")


@dataclass(frozen=True)
class TrajectoryBatch:
    config: SdeConfig
    grid: Grid1D
    final_positions: np.ndarray
    sample_positions: np.ndarray | None
    increments_logged: np.ndarray | None = None


def drift_from_density(rho: ScalarField, nu: float,
                       bc: BoundaryCondition = BoundaryCondition.DIRICHLET_ZERO) -> ScalarField:
    """nu * gradient(ln rho), node-wise."""
    v = rho.values
    if np.any(v[1:-1] <= 0):
        raise NodeAtZeroError("density has a nonpositive interior node")
    ln_rho = ScalarField(rho.grid, np.log(np.maximum(v, RHO_FLOOR)))
    return ScalarField(rho.grid, nu * gradient(ln_rho, bc).values, Role.DRIFT)


def _path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Independent counter-based stream for one path."""
    key = ((seed & _MASK64) << 64) | (path_index & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def _reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    period = 2.0 * (hi - lo)
    y = np.mod(x - lo, period)
    return lo + np.minimum(y, period - y)


def _sample_initial(u: np.ndarray, rho: ScalarField) -> np.ndarray:
    """Inverse-CDF sampling of the initial positions from a density field."""
    grid = rho.grid
    w = trapezoid_weights(grid)
    cdf = np.cumsum(w * rho.values)
    cdf = cdf / cdf[-1]
    return np.interp(u, cdf, grid.x)


def simulate(b: ScalarField, cfg: SdeConfig, x0,
             record_samples: bool = True, record_increments: bool = False,
             chunk_size: int = 8192) -> TrajectoryBatch:
    """Run the Euler-Maruyama scheme for all paths.

    ``x0`` is either a position (every path starts there) or a density
    ScalarField (paths start from i.i.d. draws of it).  Drift between nodes
    is linearly interpolated.  Raises StabilityError when any realized
    |b(x) dt| exceeds 10 grid spacings.
    """
    grid = b.grid
    h = grid.h
    sqrt_step = np.sqrt(2.0 * cfg.nu * cfg.dt)
    limit = DRIFT_STEP_LIMIT * h
    from_density = isinstance(x0, ScalarField)
    if not from_density:
        x0 = float(x0)
        if not grid.x_min <= x0 <= grid.x_max:
            raise SamplingError(f"start point {x0} outside the grid domain")

    n_keep = cfg.n_steps - cfg.burn_in
    samples = np.empty(cfg.n_paths * n_keep) if record_samples else None
    finals = np.empty(cfg.n_paths)
    increments = np.empty(cfg.n_paths) if record_increments else None

    for start in range(0, cfg.n_paths, chunk_size):
        stop = min(start + chunk_size, cfg.n_paths)
        m = stop - start
        noise = np.empty((m, cfg.n_steps))
        u_init = np.empty(m) if from_density else None
        for j in range(m):
            gen = _path_generator(cfg.seed, start + j)
            if from_density:
                u_init[j] = gen.random()
            noise[j, :] = gen.standard_normal(cfg.n_steps)

        x = _sample_initial(u_init, x0) if from_density else np.full(m, x0)
        kept = np.empty((m, n_keep)) if record_samples else None
        for k in range(cfg.n_steps):
            drift_step = np.interp(x, grid.x, b.values) * cfg.dt
            bad = np.abs(drift_step) > limit
            if np.any(bad):
                i = int(np.argmax(bad))
                raise StabilityError(
                    f"drift step |b*dt|={abs(drift_step[i]):.3g} exceeds {DRIFT_STEP_LIMIT} "
                    f"grid spacings at x={x[i]:.6g}, step {k}: time step too large for grid")
            x_new = _reflect(x + drift_step + sqrt_step * noise[:, k],
                             grid.x_min, grid.x_max)
            if record_increments and k == 0:
                increments[start:stop] = x_new - x
            x = x_new
            if record_samples and k >= cfg.burn_in:
                kept[:, k - cfg.burn_in] = x
        if record_samples:
            samples[start * n_keep:stop * n_keep] = kept.ravel()
        finals[start:stop] = x

    return TrajectoryBatch(config=cfg, grid=grid, final_positions=finals,
                           sample_positions=samples, increments_logged=increments)


def stationary_histogram(batch: TrajectoryBatch, grid: Grid1D):
    """Node-centered density histogram of the post-burn-in samples.

    Node i owns the cell [x_i - h/2, x_i + h/2] (half cells at the edges),
    so the trapezoidal integral of the returned density is exactly 1.
    Returns (density field, per-node standard error of the density).
    """
    if batch.sample_positions is None or batch.sample_positions.size == 0:
        raise SamplingError("batch has no post-burn-in samples")
    s = batch.sample_positions
    h = grid.h
    edges = np.concatenate(([grid.x_min], grid.x_min + (np.arange(grid.n - 1) + 0.5) * h,
                            [grid.x_max]))
    counts, _ = np.histogram(s, bins=edges)
    n_total = s.size
    w = trapezoid_weights(grid)
    p = counts / n_total
    density = p / w
    stderr = np.sqrt(p * (1.0 - p) / n_total) / w
    return ScalarField(grid, density, Role.DENSITY), stderr

"""Preacceleration-averaged force, computed two independent ways.

The observable is the conditional expectation of the exponentially weighted
future force along the diffusion,

    F(x) = - int_0^inf ds e^{-s} int dy P_{tau s}(y, x) dV/dy (y),

realized (a) by quadrature over evolved transition-kernel columns at
Gauss-Laguerre abscissas, and (b) by Monte Carlo over simulated paths started
at x, which by Markov stationarity is the same conditional law.  The module
also checks the two identities that tie the force back to the stationary
density: the resolvent identity [1 - tau (b d/dx + nu d2/dx2)] F = -dV/dx,
and the generalized Gibbs balance kT d/dx ln(rho) = F.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import thread_map
from .errors import QuadratureBudgetError, SamplingError
from .fields import (
    BoundaryCondition,
    Role,
    ScalarField,
    gradient,
    laplacian,
    support_mask,
    trapezoid_weights,
)
from .kernels import default_kernel_dt, evolve_forward
from .sde import RHO_FLOOR, SdeConfig, _path_generator, _reflect
from .stationary import curvature_potential

#: truncating the exponential weight at s_max may discard at most this
#: fraction of the force scale.
TAIL_BUDGET = 1e-6
#: interior-mask rule shared by all residual reports.
MASK_FLOOR = 1e-12
MASK_EDGE_MARGIN = 5


class ForceMethod(str, enum.Enum):
    KERNEL_QUADRATURE = "kernel_quadrature"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class ForceEstimate:
    values: ScalarField
    stderr: np.ndarray
    method: ForceMethod
    tau: float
    s_quadrature: str


@dataclass(frozen=True)
class ForceResidualReport:
    relative_l2: float
    n_masked: int
    max_stderr_units: float | None = None
    rms_stderr_units: float | None = None


def _check_tail_budget(s_max: float):
    if s_max <= 0:
        raise QuadratureBudgetError("s_max must be positive")
    if math.exp(-s_max) > TAIL_BUDGET:
        raise QuadratureBudgetError(
            f"exp(-s_max)={math.exp(-s_max):.2e} exceeds the tail budget {TAIL_BUDGET:g}; "
            f"use s_max >= {-math.log(TAIL_BUDGET):.1f}")


def extra_potential(rho: ScalarField, gamma: float,
                    bc: BoundaryCondition = BoundaryCondition.DIRICHLET_ZERO) -> ScalarField:
    """Radiative extra potential -gamma * laplacian(sqrt(rho))/sqrt(rho).

    Shares its discrete core with the quantum potential, so the two agree
    node-for-node whenever gamma = hbar^2/2m.
    """
    return curvature_potential(rho, gamma, bc)


def force_kernel(V: ScalarField, b: ScalarField, nu: float, tau: float,
                 s_max: float = 20.0, n_s: int = 16, dt: float | None = None) -> ForceEstimate:
    """Kernel-quadrature force at every grid node.

    Evolves the transition kernel from each start node to the time ladder
    tau * s_j (Gauss-Laguerre abscissas s_j <= s_max, whose weights absorb
    the e^{-s} factor) and integrates the potential gradient against each
    column.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    _check_tail_budget(s_max)
    nodes, weights = np.polynomial.laguerre.laggauss(n_s)
    keep = nodes <= s_max
    nodes, weights = nodes[keep], weights[keep]
    if nodes.size == 0:
        raise QuadratureBudgetError("no quadrature nodes inside s_max")
    grid = V.grid
    grad_v = gradient(V, BoundaryCondition.DIRICHLET_ZERO).values
    w_int = trapezoid_weights(grid)
    times = [0.0] + list(tau * nodes)
    if dt is None:
        dt = min(default_kernel_dt(b, nu), tau * nodes[0] / 4.0)

    def node_force(x0: int) -> float:
        K = evolve_forward(b, nu, x0, times, dt)
        inner = [float(np.dot(w_int * col.values, grad_v)) for col in K.columns[1:]]
        return -float(np.dot(weights, inner))

    values = np.array(thread_map(node_force, range(grid.n)))
    return ForceEstimate(
        values=ScalarField(grid, values, Role.FORCE),
        stderr=np.zeros(grid.n),
        method=ForceMethod.KERNEL_QUADRATURE,
        tau=tau,
        s_quadrature=f"gauss-laguerre n={n_s}, nodes kept <= s_max={s_max:g}, dt={dt:g}")


def force_monte_carlo(V: ScalarField, b: ScalarField, cfg: SdeConfig, tau: float,
                      s_max: float = 20.0, start_nodes=(),
                      chunk_size: int = 8192) -> ForceEstimate:
    """Monte Carlo force at the requested start nodes.

    For each start node, paths are advanced with the Euler-Maruyama scheme
    and the integral int_0^{s_max} ds e^{-s} dV/dx(x(tau s)) is accumulated
    by the trapezoidal rule at the path's native steps (s = t/tau).  Nodes
    not in ``start_nodes`` carry NaN values and infinite standard error.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    _check_tail_budget(s_max)
    if cfg.dt > tau / 20.0:
        raise SamplingError(
            f"dt={cfg.dt:g} undersamples the preacceleration window; need dt <= tau/20 = {tau / 20:g}")
    if cfg.n_paths < 2:
        raise SamplingError("need at least 2 paths per start node for a standard error")
    start_nodes = list(start_nodes)
    if not start_nodes:
        raise SamplingError("start_nodes must not be empty")

    grid = V.grid
    grad_v = gradient(V, BoundaryCondition.DIRICHLET_ZERO).values
    n_steps = int(round(s_max * tau / cfg.dt))
    ds = cfg.dt / tau
    sqrt_step = np.sqrt(2.0 * cfg.nu * cfg.dt)
    # trapezoidal weights in s, including the k = 0 endpoint
    s_grid = ds * np.arange(n_steps + 1)
    wt = ds * np.exp(-s_grid)
    wt[0] *= 0.5
    wt[-1] *= 0.5

    values = np.full(grid.n, np.nan)
    stderr = np.full(grid.n, np.inf)
    for node_idx, x0_node in enumerate(start_nodes):
        x0 = float(grid.x[x0_node])
        acc_all = np.empty(cfg.n_paths)
        for start in range(0, cfg.n_paths, chunk_size):
            stop = min(start + chunk_size, cfg.n_paths)
            m = stop - start
            noise = np.empty((m, n_steps))
            for j in range(m):
                gen = _path_generator(cfg.seed, node_idx * cfg.n_paths + start + j)
                noise[j, :] = gen.standard_normal(n_steps)
            x = np.full(m, x0)
            acc = wt[0] * np.interp(x, grid.x, grad_v)
            for k in range(n_steps):
                drift_step = np.interp(x, grid.x, b.values) * cfg.dt
                x = _reflect(x + drift_step + sqrt_step * noise[:, k],
                             grid.x_min, grid.x_max)
                acc = acc + wt[k + 1] * np.interp(x, grid.x, grad_v)
            acc_all[start:stop] = acc
        mean = math.fsum(acc_all) / cfg.n_paths
        var = math.fsum((a - mean) ** 2 for a in acc_all) / (cfg.n_paths - 1)
        values[x0_node] = -mean
        stderr[x0_node] = math.sqrt(var / cfg.n_paths)

    field_vals = np.where(np.isnan(values), 0.0, values)
    field = ScalarField(grid, field_vals, Role.FORCE)
    return ForceEstimate(values=field, stderr=stderr, method=ForceMethod.MONTE_CARLO,
                         tau=tau,
                         s_quadrature=f"trapezoid in s, ds={ds:g}, {n_steps} steps to s_max={s_max:g}")


def _interior_mask(grid_n: int, rho: ScalarField | None):
    if rho is None:
        mask = np.ones(grid_n, dtype=bool)
        mask[:MASK_EDGE_MARGIN] = False
        mask[-MASK_EDGE_MARGIN:] = False
        return mask
    return support_mask(rho, MASK_FLOOR, MASK_EDGE_MARGIN)


def check_gibbs_relation(rho: ScalarField, F: ForceEstimate, kT: float,
                         V: ScalarField | None = None) -> ForceResidualReport:
    """Relative L2 of kT * d/dx ln(rho) - F over the interior mask.

    Normalized by the L2 norm of dV/dx when the potential is supplied,
    otherwise by the norm of F itself.  For Monte Carlo estimates the
    residual is additionally reported in standard-error units.
    """
    grid = rho.grid
    mask = _interior_mask(grid.n, rho)
    if F.method == ForceMethod.MONTE_CARLO:
        mask = mask & np.isfinite(F.stderr)
    if not np.any(mask):
        raise SamplingError("no nodes on the interior mask")
    ln_rho = np.log(np.maximum(rho.values, RHO_FLOOR))
    lhs = kT * gradient(ScalarField(grid, ln_rho), BoundaryCondition.DIRICHLET_ZERO).values
    resid = lhs - F.values.values
    if V is not None:
        scale_vec = gradient(V, BoundaryCondition.DIRICHLET_ZERO).values
    else:
        scale_vec = F.values.values
    num = float(np.sqrt(np.sum(resid[mask] ** 2)))
    den = float(np.sqrt(np.sum(scale_vec[mask] ** 2)))
    rel = num / den if den > 0 else np.inf
    max_z = rms_z = None
    if F.method == ForceMethod.MONTE_CARLO:
        z = resid[mask] / F.stderr[mask]
        max_z = float(np.max(np.abs(z)))
        rms_z = float(np.sqrt(np.mean(z ** 2)))
    return ForceResidualReport(relative_l2=rel, n_masked=int(mask.sum()),
                               max_stderr_units=max_z, rms_stderr_units=rms_z)


def check_operator_identity(F: ForceEstimate, b: ScalarField, nu: float, tau: float,
                            V: ScalarField, rho: ScalarField | None = None) -> ForceResidualReport:
    """Relative L2 of [1 - tau (b d/dx + nu d2/dx2)] F + dV/dx over the mask.

    Requires a kernel-quadrature force (Monte Carlo fields are too rough to
    differentiate).
    """
    if F.method != ForceMethod.KERNEL_QUADRATURE:
        raise ValueError("operator identity needs a kernel_quadrature force estimate")
    grid = V.grid
    mask = _interior_mask(grid.n, rho)
    grad_f = gradient(F.values, BoundaryCondition.DIRICHLET_ZERO).values
    lap_f = laplacian(F.values, BoundaryCondition.DIRICHLET_ZERO).values
    grad_v = gradient(V, BoundaryCondition.DIRICHLET_ZERO).values
    resid = F.values.values - tau * (b.values * grad_f + nu * lap_f) + grad_v
    num = float(np.sqrt(np.sum(resid[mask] ** 2)))
    den = float(np.sqrt(np.sum(grad_v[mask] ** 2)))
    return ForceResidualReport(relative_l2=num / den if den > 0 else np.inf,
                               n_masked=int(mask.sum()))

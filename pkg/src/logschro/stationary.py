"""Stationary solvers: classical Gibbs density, linear ground states, and the
finite-temperature logarithmic eigenproblem.

The nonlinear equation solved here is, in dimensionless form,

    [-gamma d2/dx2 + V(x) + kT ln rho(x)] psi = lam psi,   rho = psi^2,

with rho normalized to unit trapezoidal integral and Dirichlet boxes.  The
log term uses 2 kT R = kT ln rho, R = (1/2) ln rho.  Ground states are
nodeless, which keeps the logarithm finite everywhere except in the far
tails, where a positivity floor takes over.

Solution strategy: a short split-step imaginary-time warmup (log term frozen
per step, renormalization every step), followed by a damped self-consistent
loop in which the frozen-log linear operator is diagonalized exactly and the
log-density is mixed with an adaptive damping factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import ConvergenceError, FieldError, NodeAtZeroError
from .fields import (
    BoundaryCondition,
    Grid1D,
    Role,
    ScalarField,
    as_density,
    laplacian,
    support_mask,
    trapezoid,
)

#: psi is clamped here during iteration so ln(rho) stays finite.
PSI_FLOOR = 1e-150
#: below this fraction of the peak amplitude the eigenvector tail is numerical
#: noise; the log-density is flattened there so it cannot distort the
#: effective potential (28 decades in rho below the peak, far under every
#: reporting mask).
PSI_REL_FLOOR = 1e-14
#: pointwise residual reports exclude nodes below this density.
MASK_FLOOR = 1e-12
#: exponent range guard for exp() in the Gibbs density.
EXP_GUARD = 700.0


@dataclass(frozen=True)
class EigenSolution:
    """Converged stationary state: eigenvalue, amplitude, density, log-density."""

    lam: float
    psi: ScalarField
    rho: ScalarField
    R: ScalarField
    residual: float
    iterations: int
    kT: float


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 400
    warmup_steps: int = 80
    warmup_dtau: float = 0.1
    mix: float = 0.6
    floor: float = PSI_FLOOR


@dataclass(frozen=True)
class BalanceReport:
    """Pointwise stationary-balance residual max |V + V_extra + kT ln rho - lam|."""

    max_residual: float
    node: int
    x: float
    n_masked: int


def classical_gibbs(V: ScalarField, kT: float) -> ScalarField:
    """Normalized exp(-V/kT); the minimum of V is subtracted before
    exponentiation, which the normalization makes invisible."""
    if kT <= 0:
        raise ValueError("kT must be positive for the classical Gibbs density")
    shifted = (V.values - V.values.min()) / kT
    if shifted.max() > EXP_GUARD:
        # harmless: the omitted weight underflows to zero anyway
        shifted = np.minimum(shifted, EXP_GUARD)
    return as_density(V.grid, np.exp(-shifted))


def _sqrt_density(rho: ScalarField) -> np.ndarray:
    v = rho.values
    if np.any(v[1:-1] <= 0):
        raise NodeAtZeroError("density has a nonpositive interior node")
    return np.sqrt(v)


def quantum_potential(rho: ScalarField, hbar: float, m: float,
                      bc: BoundaryCondition = BoundaryCondition.DIRICHLET_ZERO) -> ScalarField:
    """-(hbar^2/2m) * laplacian(sqrt(rho)) / sqrt(rho), node-wise."""
    return curvature_potential(rho, hbar * hbar / (2.0 * m), bc)


def curvature_potential(rho: ScalarField, coefficient: float,
                        bc: BoundaryCondition = BoundaryCondition.DIRICHLET_ZERO) -> ScalarField:
    """-coefficient * laplacian(sqrt(rho))/sqrt(rho).

    Shared discrete core of the quantum potential and of the radiative extra
    potential, so the two coincide exactly when the coefficients do.
    """
    root = _sqrt_density(rho)
    lap = laplacian(ScalarField(rho.grid, root), bc).values
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(root > 0, lap / np.where(root > 0, root, 1.0), 0.0)
    return ScalarField(rho.grid, -coefficient * ratio, Role.POTENTIAL)


def _interior_tridiag(V_values: np.ndarray, coef: float, h: float):
    """Diagonal and off-diagonal of -coef*Delta + diag(V) on interior nodes
    (Dirichlet zero ghosts)."""
    d = 2.0 * coef / h ** 2 + V_values[1:-1]
    e = np.full(V_values.size - 3, -coef / h ** 2)
    return d, e


def _apply_operator(W: np.ndarray, coef: float, h: float, psi: np.ndarray) -> np.ndarray:
    """(-coef*Delta + diag(W)) psi with Dirichlet zero ghost nodes."""
    lap = np.empty_like(psi)
    lap[1:-1] = psi[2:] - 2.0 * psi[1:-1] + psi[:-2]
    lap[0] = psi[1] - 2.0 * psi[0]
    lap[-1] = psi[-2] - 2.0 * psi[-1]
    return -coef * lap / h ** 2 + W * psi


def _normalize_psi(grid: Grid1D, psi: np.ndarray) -> np.ndarray:
    norm = trapezoid(psi * psi, grid)
    if norm <= 0:
        raise ConvergenceError("iterate lost all its mass")
    return psi / np.sqrt(norm)


def _log_density(psi: np.ndarray, floor: float) -> np.ndarray:
    a = np.abs(psi)
    cut = max(floor, float(a.max()) * PSI_REL_FLOOR)
    return 2.0 * np.log(np.maximum(a, cut))


def _ground_of_frozen(grid: Grid1D, W: np.ndarray, coef: float, floor: float):
    """Exact ground eigenpair of -coef*Delta + diag(W) (Dirichlet box)."""
    d, e = _interior_tridiag(W, coef, grid.h)
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"tridiagonal eigensolver failed: {exc}") from exc
    v = vecs[:, 0]
    peak = np.argmax(np.abs(v))
    if v[peak] < 0:
        v = -v
    if np.any(v < -1e-10 * abs(v[peak])):
        raise ConvergenceError("ground eigenvector has a genuine sign change (node collapse)")
    v = np.maximum(v, floor)
    psi = np.zeros(grid.n)
    psi[1:-1] = v
    return float(vals[0]), _normalize_psi(grid, psi)


def _package_solution(grid: Grid1D, psi: np.ndarray, lam: float, residual: float,
                      iterations: int, kT: float, floor: float) -> EigenSolution:
    rho_vals = psi * psi
    rho = as_density(grid, rho_vals)
    R = ScalarField(grid, 0.5 * _log_density(psi, floor), Role.LOG_DENSITY)
    psi_field = ScalarField(grid, psi, Role.GENERIC)
    return EigenSolution(lam=lam, psi=psi_field, rho=rho, R=R,
                         residual=residual, iterations=iterations, kT=kT)


def solve_linear_ground(V: ScalarField, hbar: float, m: float,
                        n_states: int = 1) -> list[EigenSolution]:
    """Lowest eigenpairs of -(hbar^2/2m)Delta + V on the Dirichlet box.

    The ground state is returned with positive amplitude.  Excited states are
    provided for reference; their log-density uses the same positivity floor
    as everything else (meaningful only away from nodes).
    """
    if n_states < 1:
        raise ValueError("n_states must be at least 1")
    grid = V.grid
    coef = hbar * hbar / (2.0 * m)
    d, e = _interior_tridiag(V.values, coef, grid.h)
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, n_states - 1))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"tridiagonal eigensolver failed: {exc}") from exc
    out = []
    for j in range(n_states):
        v = vecs[:, j]
        nz = np.argmax(np.abs(v) > 1e-8 * np.max(np.abs(v)))
        if v[nz] < 0:
            v = -v
        psi = np.zeros(grid.n)
        psi[1:-1] = v
        psi = _normalize_psi(grid, psi)
        if j == 0:
            psi = np.abs(psi)  # Perron ground state; scrub roundoff signs
            psi[0] = psi[-1] = 0.0
        res = _apply_operator(V.values, coef, grid.h, psi)[1:-1] - vals[j] * psi[1:-1]
        residual = float(np.sqrt(trapezoid(np.concatenate(([0.0], res * res, [0.0])), grid)))
        out.append(_package_solution(grid, psi, float(vals[j]), residual, 1, 0.0, PSI_FLOOR))
    return out


def _initial_psi(V: ScalarField, gamma: float, kT: float) -> np.ndarray:
    v = V.values - V.values.min()
    scale = max(np.sqrt(gamma), kT, 1e-6)
    psi = np.exp(-np.minimum(v / (2.0 * scale), EXP_GUARD))
    psi[0] = psi[-1] = 0.0
    return _normalize_psi(V.grid, psi)


def _full_residual(grid: Grid1D, V: np.ndarray, gamma: float, kT: float,
                   psi: np.ndarray, floor: float):
    """Residual of the self-consistent equation and its Rayleigh eigenvalue."""
    W = V + kT * _log_density(psi, floor)
    Hpsi = _apply_operator(W, gamma, grid.h, psi)
    lam = trapezoid(psi * Hpsi, grid)  # psi is normalized
    r = Hpsi - lam * psi
    r[0] = r[-1] = 0.0
    return float(np.sqrt(trapezoid(r * r, grid))), float(lam)


def _warmup(grid: Grid1D, V: np.ndarray, gamma: float, kT: float,
            psi: np.ndarray, opts: SolverOptions) -> np.ndarray:
    """Split-step imaginary time: exponential potential kick, implicit
    diffusion, renormalization.  Unconditionally positivity-preserving."""
    if opts.warmup_steps <= 0:
        return psi
    h = grid.h
    dtau = opts.warmup_dtau
    n = grid.n
    # banded matrix of I + dtau * (-gamma * Delta) on interior nodes
    ab = np.zeros((3, n - 2))
    ab[0, 1:] = -dtau * gamma / h ** 2
    ab[1, :] = 1.0 + 2.0 * dtau * gamma / h ** 2
    ab[2, :-1] = -dtau * gamma / h ** 2
    for _ in range(opts.warmup_steps):
        W = V + kT * _log_density(psi, opts.floor)
        kick = np.exp(-dtau * np.minimum(W - W.min(), EXP_GUARD))
        interior = (kick * psi)[1:-1]
        interior = solve_banded((1, 1), ab, interior)
        psi = np.zeros(n)
        psi[1:-1] = np.maximum(interior, opts.floor)
        psi = _normalize_psi(grid, psi)
    return psi


def solve_log_nlse_ground(V: ScalarField, gamma: float, kT: float,
                          opts: SolverOptions = SolverOptions()) -> EigenSolution:
    """Ground state of [-gamma*Delta + V + kT ln rho] psi = lam psi.

    kT = 0 reduces to the linear problem and is solved directly.  At kT > 0
    the damped self-consistent loop drives the full nonlinear residual below
    ``opts.tol``; the eigenvalue is the Rayleigh quotient of the converged
    state under the unit-density normalization.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if kT < 0:
        raise ValueError("kT must be nonnegative")
    grid = V.grid

    if kT == 0.0:
        lam, psi = _ground_of_frozen(grid, V.values, gamma, opts.floor)
        residual, lam_full = _full_residual(grid, V.values, gamma, 0.0, psi, opts.floor)
        return _package_solution(grid, psi, lam_full, residual, 1, 0.0, opts.floor)

    psi = _initial_psi(V, gamma, kT)
    psi = _warmup(grid, V.values, gamma, kT, psi, opts)

    lnrho = _log_density(psi, opts.floor)
    beta = opts.mix
    prev_residual = np.inf
    shrink_streak = 0
    best = None

    for it in range(1, opts.max_iter + 1):
        W = V.values + kT * lnrho
        _, psi = _ground_of_frozen(grid, W, gamma, opts.floor)
        residual, lam = _full_residual(grid, V.values, gamma, kT, psi, opts.floor)
        if best is None or residual < best[0]:
            best = (residual, psi.copy(), lam, it)
        if residual <= opts.tol:
            return _package_solution(grid, psi, lam, residual, it, kT, opts.floor)
        if residual > prev_residual:
            beta = max(0.5 * beta, 1e-3)
            shrink_streak = 0
        else:
            shrink_streak += 1
            if shrink_streak >= 4:
                beta = min(1.4 * beta, 1.0)
                shrink_streak = 0
        prev_residual = residual
        lnrho = (1.0 - beta) * lnrho + beta * _log_density(psi, opts.floor)

    raise ConvergenceError(
        f"log-NLSE fixed point did not reach tol={opts.tol:g} in {opts.max_iter} iterations "
        f"(best residual {best[0]:.3e} at iteration {best[3]})",
        iterations=opts.max_iter, residual=best[0])


def verify_stationary_decomposition(sol: EigenSolution, V: ScalarField,
                                    gamma: float) -> BalanceReport:
    """Max interior |V + V_extra + kT ln rho - lam| on the rho >= 1e-12 mask,
    where V_extra = -gamma * laplacian(sqrt(rho))/sqrt(rho)."""
    if V.grid != sol.rho.grid:
        raise FieldError("potential and solution live on different grids")
    mask = support_mask(sol.rho, MASK_FLOOR)
    mask[0] = mask[-1] = False
    if not np.any(mask):
        raise FieldError("no nodes above the density floor")
    v_extra = curvature_potential(sol.rho, gamma).values
    lnrho = 2.0 * sol.R.values
    balance = V.values + v_extra + sol.kT * lnrho - sol.lam
    idx = np.flatnonzero(mask)
    local = np.abs(balance[idx])
    k = int(idx[np.argmax(local)])
    return BalanceReport(max_residual=float(np.max(local)), node=k,
                         x=float(V.grid.x[k]), n_masked=int(mask.sum()))

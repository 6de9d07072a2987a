"""Verification experiments, sweeps, and report emission.

``run_verify`` executes the full chain on one configuration:

    solver -> stationary balance -> SDE/histogram -> kernel limits -> forces

and judges every measured number against the tolerance configured for it.
All randomness derives from the single config seed, so a (config, seed) pair
determines every emitted byte.  Wall-clock timestamps are kept on the bundle
for logs but never serialized into the canonical JSON report.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError, StageError
from .fields import (
    Role,
    ScalarField,
    as_density,
    build_grid,
    l1_distance,
    support_mask,
    trapezoid,
)
from .force import (
    ForceMethod,
    check_gibbs_relation,
    check_operator_identity,
    extra_potential,
    force_kernel,
    force_monte_carlo,
)
from .kernels import default_kernel_dt, detailed_balance_residual, evolve_forward, \
    ergodic_limit, verify_backward
from .sde import SdeConfig, drift_from_density, simulate, stationary_histogram
from .stationary import quantum_potential, solve_log_nlse_ground, \
    verify_stationary_decomposition

CSV_RECORDS_HEADER = "stage,name,value,tolerance,passed"
CSV_PROFILES_HEADER = "x,V,rho,V_extra,F_E"
CSV_SWEEP_HEADER = "parameter,value,lam,l1_to_linear,residual,status"
CSV_SWEEP_KT_HEADER = CSV_SWEEP_HEADER + ",abs_lambda_shift"
CSV_SAMPLES_HEADER = "position"


@dataclass(frozen=True)
class ResultRecord:
    stage: str
    name: str
    value: float
    tolerance: float
    passed: bool


@dataclass
class ReportBundle:
    config_hash: str
    seed: int
    versions: dict
    records: list = field(default_factory=list)
    profiles: dict | None = None
    sweep: dict | None = None
    timestamps: dict = field(default_factory=dict)
    samples: np.ndarray | None = None
    kernel_dump: dict | None = None

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, stage: str, name: str, value: float, tolerance: float,
            passed: bool | None = None):
        if passed is None:
            passed = bool(value <= tolerance)
        self.records.append(ResultRecord(stage, name, float(value), float(tolerance),
                                         bool(passed)))


def _versions() -> dict:
    return {
        "logschro": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _new_bundle(cfg: ExperimentConfig) -> ReportBundle:
    b = ReportBundle(config_hash=cfg.config_hash(), seed=cfg.seed, versions=_versions())
    b.timestamps["started"] = time.time()
    return b


def _staged(stage: str, fn):
    try:
        return fn()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def _gausson_oracle(omega: float, gamma: float, kT: float):
    """Closed-form Gaussian ground state for the quadratic potential."""
    alpha = (-kT + math.sqrt(kT * kT + 2.0 * gamma * omega * omega)) / (2.0 * gamma)
    lam = gamma * alpha + 0.5 * kT * math.log(alpha / math.pi)
    return alpha, lam


def _stage_solver(cfg: ExperimentConfig, bundle: ReportBundle, state: dict):
    grid = cfg.grid()
    V = cfg.potential(grid)
    p = cfg["params"]
    gamma, kT = p["gamma"], p["kT"]
    sol = _staged("solve_log_nlse_ground",
                  lambda: solve_log_nlse_ground(V, gamma, kT, cfg.solver_options()))
    bundle.add("solver", "residual", sol.residual, cfg.tolerance("solver_residual"))
    if cfg["potential"]["name"] == "harmonic" and kT > 0:
        alpha_ref, lam_ref = _gausson_oracle(cfg["potential"]["omega"], gamma, kT)
        var = trapezoid(grid.x ** 2 * sol.rho.values, grid)
        alpha_fit = 1.0 / (2.0 * var)
        bundle.add("solver", "gausson_alpha_rel", abs(alpha_fit - alpha_ref) / alpha_ref,
                   cfg.tolerance("gausson_alpha_rel"))
        bundle.add("solver", "gausson_lambda_rel", abs(sol.lam - lam_ref) / abs(lam_ref),
                   cfg.tolerance("gausson_lambda_rel"))
    state.update(grid=grid, V=V, sol=sol, gamma=gamma, kT=kT)


def _stage_balance(cfg: ExperimentConfig, bundle: ReportBundle, state: dict):
    sol, V, gamma = state["sol"], state["V"], state["gamma"]
    rep = _staged("verify_stationary_decomposition",
                  lambda: verify_stationary_decomposition(sol, V, gamma))
    bundle.add("balance", "stationary_balance_max", rep.max_residual,
               cfg.tolerance("balance_max"))
    p = cfg["params"]
    gamma_qm = p["hbar"] ** 2 / (2.0 * p["m"])
    if abs(gamma - gamma_qm) <= 1e-9 * gamma_qm:
        vq = quantum_potential(sol.rho, p["hbar"], p["m"]).values
        ve = extra_potential(sol.rho, gamma).values
        mask = support_mask(sol.rho, 1e-12, edge_margin=1)
        diff = float(np.max(np.abs((vq - ve)[mask])))
        bundle.add("balance", "quantum_potential_identity_max", diff,
                   cfg.tolerance("quantum_identity"))


def _stage_sde(cfg: ExperimentConfig, bundle: ReportBundle, state: dict):
    sol, grid = state["sol"], state["grid"]
    nu = cfg["params"]["nu"]
    b = _staged("drift_from_density", lambda: drift_from_density(sol.rho, nu))
    state["drift"] = b
    sde_cfg = cfg.sde_config()
    batch = _staged("simulate", lambda: simulate(b, sde_cfg, sol.rho))
    hist_grid = build_grid(grid.x_min, grid.x_max, cfg["sde"]["hist_n"])
    hist, _ = _staged("stationary_histogram", lambda: stationary_histogram(batch, hist_grid))
    rho_coarse = as_density(hist_grid, np.interp(hist_grid.x, grid.x, sol.rho.values))
    bundle.add("sde", "histogram_l1", l1_distance(hist, rho_coarse),
               cfg.tolerance("sde_hist_l1"))
    if cfg["output"]["dump_samples"]:
        bundle.samples = batch.sample_positions

    # increment statistics on a drift-free run from the domain center
    inc_cfg = SdeConfig(dt=sde_cfg.dt, n_steps=1, n_paths=cfg["sde"]["increment_paths"],
                        burn_in=0, seed=cfg.seed + 1, nu=nu)
    zero_drift = ScalarField(grid, np.zeros(grid.n))
    x0 = 0.5 * (grid.x_min + grid.x_max)
    inc_batch = _staged("simulate", lambda: simulate(
        zero_drift, inc_cfg, x0, record_samples=False, record_increments=True))
    inc = inc_batch.increments_logged
    n = inc.size
    target = 2.0 * nu * sde_cfg.dt
    var = float(np.var(inc, ddof=1))
    se_var = target * math.sqrt(2.0 / (n - 1))
    se_mean = math.sqrt(target / n)
    bundle.add("sde", "increment_var_sigmas", abs(var - target) / se_var,
               cfg.tolerance("increment_sigmas"))
    bundle.add("sde", "increment_mean_sigmas", abs(float(np.mean(inc))) / se_mean,
               cfg.tolerance("increment_sigmas"))


def _kernel_window(state: dict) -> tuple:
    rho, grid = state["sol"].rho, state["grid"]
    support = np.flatnonzero(rho.values >= 1e-12)
    lo = max(int(support[0]) + 5, 1)
    hi = min(int(support[-1]) - 4, grid.n - 1)
    return lo, hi


def _stage_kernel(cfg: ExperimentConfig, bundle: ReportBundle, state: dict):
    grid, sol, b = state["grid"], state["sol"], state["drift"]
    nu = cfg["params"]["nu"]
    kcfg = cfg["kernel"]
    dt = kcfg["dt"] if kcfg["dt"] > 0 else default_kernel_dt(b, nu)
    x0 = int(np.argmax(sol.rho.values))
    times = [0.0] + list(kcfg["times"])
    K = _staged("evolve_forward", lambda: evolve_forward(b, nu, x0, times, dt))

    mass_err = max(abs(trapezoid(c.values, grid) - 1.0) for c in K.columns)
    bundle.add("kernel", "mass_error_max", mass_err, cfg.tolerance("kernel_mass"))
    col0 = K.columns[0].values
    delta_ok = (np.count_nonzero(col0) == 1) and col0[x0] > 0
    bundle.add("kernel", "t0_delta_exact", 0.0 if delta_ok else 1.0, 0.0, passed=delta_ok)

    erg = _staged("ergodic_limit", lambda: ergodic_limit(K, sol.rho))
    bundle.add("kernel", "ergodic_final_l1", erg.final_l1, cfg.tolerance("ergodic_l1"),
               passed=erg.converged)

    t_mid, spacing = kcfg["backward_t"], kcfg["backward_spacing"]
    Kb = _staged("evolve_forward", lambda: evolve_forward(
        b, nu, x0, [0.0, t_mid - spacing, t_mid, t_mid + spacing], dt))
    window = _kernel_window(state)
    brep = _staged("verify_backward", lambda: verify_backward(Kb, b, nu, window=window))
    bundle.add("kernel", "backward_rel_l2", brep.relative_l2, cfg.tolerance("backward_rel"))

    db = _staged("detailed_balance", lambda: detailed_balance_residual(
        b, nu, sol.rho, kcfg["detailed_balance_t"], dt, window))
    bundle.add("kernel", "detailed_balance_rel", db, cfg.tolerance("detailed_balance_rel"))

    if cfg["output"]["dump_kernel"]:
        bundle.kernel_dump = {"times": list(K.times),
                              "columns": np.column_stack([c.values for c in K.columns]),
                              "x": grid.x}


def _stage_force(cfg: ExperimentConfig, bundle: ReportBundle, state: dict):
    grid, sol, V, b = state["grid"], state["sol"], state["V"], state["drift"]
    p = cfg["params"]
    nu, kT, gamma = p["nu"], p["kT"], p["gamma"]
    if kT <= 0:
        raise StageError("force", ConfigError("force stages need kT > 0", key="params.kT"))
    tau = gamma / (2.0 * nu * kT)
    fcfg = cfg["force"]
    dt = fcfg["dt"] if fcfg["dt"] > 0 else None

    Fk = _staged("force_kernel", lambda: force_kernel(
        V, b, nu, tau, s_max=fcfg["s_max"], n_s=fcfg["n_s"], dt=dt))

    starts = [grid.index_of(x) for x in fcfg["mc_start_xs"]]
    mc_cfg = SdeConfig(dt=fcfg["mc_dt"], n_steps=1, n_paths=fcfg["mc_paths"],
                       burn_in=0, seed=cfg.seed + 2, nu=nu)
    Fm = _staged("force_monte_carlo", lambda: force_monte_carlo(
        V, b, mc_cfg, tau, s_max=fcfg["s_max"], start_nodes=starts))
    z = np.abs(Fm.values.values[starts] - Fk.values.values[starts]) / Fm.stderr[starts]
    bundle.add("force", "method_agreement_sigmas", float(np.max(z)),
               cfg.tolerance("force_mc_sigmas"))

    gibbs = _staged("check_gibbs_relation",
                    lambda: check_gibbs_relation(sol.rho, Fk, kT, V=V))
    bundle.add("force", "gibbs_rel_l2", gibbs.relative_l2, cfg.tolerance("gibbs_rel"))

    op = _staged("check_operator_identity",
                 lambda: check_operator_identity(Fk, b, nu, tau, V, rho=sol.rho))
    bundle.add("force", "operator_identity_rel_l2", op.relative_l2,
               cfg.tolerance("operator_rel"))

    state["force"] = Fk
    bundle.profiles = {
        "x": grid.x,
        "V": V.values,
        "rho": sol.rho.values,
        "V_extra": extra_potential(sol.rho, gamma).values,
        "F_E": Fk.values.values,
    }


_STAGES = {
    "solver": _stage_solver,
    "balance": _stage_balance,
    "sde": _stage_sde,
    "kernel": _stage_kernel,
    "force": _stage_force,
}


def run_stages(cfg: ExperimentConfig, stages) -> ReportBundle:
    bundle = _new_bundle(cfg)
    state: dict = {}
    for name in stages:
        _STAGES[name](cfg, bundle, state)
    bundle.timestamps["finished"] = time.time()
    return bundle


def run_verify(cfg: ExperimentConfig) -> ReportBundle:
    """Full verification chain; every stage judged at configured tolerances."""
    return run_stages(cfg, ("solver", "balance", "sde", "kernel", "force"))


def run_sweep(cfg: ExperimentConfig) -> ReportBundle:
    """Repeat the stationary solve across the configured parameter sweep."""
    sw = cfg["sweep"]
    parameter, values = sw["parameter"], sw["values"]
    if not parameter:
        raise ConfigError("sweep.parameter must be set for a sweep", key="sweep.parameter")
    bundle = _new_bundle(cfg)
    p = cfg["params"]

    def point_config(value: float) -> dict:
        kv = {"gamma": p["gamma"], "kT": p["kT"],
              "omega": cfg["potential"]["omega"]}
        if parameter == "nu":
            return kv  # nu does not enter the stationary equation
        kv[parameter] = value
        return kv

    grid = cfg.grid()
    opts = cfg.solver_options()
    rows = []
    lam0 = None
    linear_cache: dict = {}

    def linear_rho(gamma: float, omega: float):
        key = (gamma, omega)
        if key not in linear_cache:
            Vg = _potential_for(cfg, grid, omega)
            linear_cache[key] = solve_log_nlse_ground(Vg, gamma, 0.0, opts)
        return linear_cache[key]

    if parameter == "kT":
        lam0 = linear_rho(p["gamma"], cfg["potential"]["omega"]).lam

    for value in values:
        kv = point_config(value)
        try:
            Vg = _potential_for(cfg, grid, kv["omega"])
            sol = solve_log_nlse_ground(Vg, kv["gamma"], kv["kT"], opts)
            lin = linear_rho(kv["gamma"], kv["omega"])
            row = {
                "parameter": parameter, "value": value, "lam": sol.lam,
                "l1_to_linear": l1_distance(sol.rho, lin.rho),
                "residual": sol.residual, "status": "ok",
            }
            if parameter == "kT":
                row["abs_lambda_shift"] = abs(sol.lam - lam0)
            rows.append(row)
        except Exception as exc:  # per-point failure: record and continue
            row = {"parameter": parameter, "value": value, "lam": float("nan"),
                   "l1_to_linear": float("nan"), "residual": float("nan"),
                   "status": f"failed: {type(exc).__name__}"}
            if parameter == "kT":
                row["abs_lambda_shift"] = float("nan")
            rows.append(row)

    n_failed = sum(1 for r in rows if r["status"] != "ok")
    bundle.sweep = {"parameter": parameter, "rows": rows, "n_failed": n_failed}
    bundle.add("sweep", "points_failed", float(n_failed), 0.0,
               passed=(n_failed == 0))
    bundle.timestamps["finished"] = time.time()
    return bundle


def _potential_for(cfg: ExperimentConfig, grid, omega: float) -> ScalarField:
    if cfg["potential"]["name"] == "harmonic":
        m = cfg["params"]["m"]
        return ScalarField(grid, 0.5 * m * omega ** 2 * grid.x ** 2, Role.POTENTIAL)
    return cfg.potential(grid)


# ---------------------------------------------------------------------------
# report emission

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def bundle_to_json_dict(bundle: ReportBundle) -> dict:
    doc = {
        "meta": {
            "config_hash": bundle.config_hash,
            "seed": bundle.seed,
            "versions": bundle.versions,
        },
        "records": [
            {"stage": r.stage, "name": r.name, "value": r.value,
             "tolerance": r.tolerance, "passed": r.passed}
            for r in bundle.records
        ],
        "all_pass": bundle.all_pass,
        "sweep": bundle.sweep,
    }
    return doc


def emit_report(bundle: ReportBundle, out_dir: str) -> list:
    """Write the JSON report and CSV tables; returns the list of paths."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = []

    path = os.path.join(out_dir, "report.json")
    _write_text(path, json.dumps(bundle_to_json_dict(bundle), sort_keys=True, indent=1)
                + "\n")
    manifest.append(path)

    lines = [CSV_RECORDS_HEADER]
    for r in bundle.records:
        lines.append(",".join([r.stage, r.name, _fmt(r.value), _fmt(r.tolerance),
                               _fmt(r.passed)]))
    path = os.path.join(out_dir, "records.csv")
    _write_text(path, "\n".join(lines) + "\n")
    manifest.append(path)

    if bundle.profiles is not None:
        cols = CSV_PROFILES_HEADER.split(",")
        rows = np.column_stack([bundle.profiles[c] for c in cols])
        lines = [CSV_PROFILES_HEADER]
        lines.extend(",".join(_fmt(float(v)) for v in row) for row in rows)
        path = os.path.join(out_dir, "profiles.csv")
        _write_text(path, "\n".join(lines) + "\n")
        manifest.append(path)

    if bundle.sweep is not None:
        is_kt = bundle.sweep["parameter"] == "kT"
        header = CSV_SWEEP_KT_HEADER if is_kt else CSV_SWEEP_HEADER
        cols = header.split(",")
        lines = [header]
        for row in bundle.sweep["rows"]:
            lines.append(",".join(_fmt(row[c]) if not isinstance(row[c], str) else row[c]
                                  for c in cols))
        path = os.path.join(out_dir, "sweep.csv")
        _write_text(path, "\n".join(lines) + "\n")
        manifest.append(path)

    if bundle.samples is not None:
        lines = [CSV_SAMPLES_HEADER]
        lines.extend(_fmt(float(v)) for v in bundle.samples)
        path = os.path.join(out_dir, "samples.csv")
        _write_text(path, "\n".join(lines) + "\n")
        manifest.append(path)

    if bundle.kernel_dump is not None:
        times = bundle.kernel_dump["times"]
        cols = bundle.kernel_dump["columns"]
        xs = bundle.kernel_dump["x"]
        lines = ["y," + ",".join("t=" + _fmt(float(t)) for t in times)]
        for i in range(cols.shape[0]):
            lines.append(",".join([_fmt(float(xs[i]))] +
                                  [_fmt(float(v)) for v in cols[i]]))
        path = os.path.join(out_dir, "kernel.csv")
        _write_text(path, "\n".join(lines) + "\n")
        manifest.append(path)

    return manifest

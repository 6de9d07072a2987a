"""Experiment configuration: INI-style sections, strict validation, defaults.

The document is flat key/value under named sections.  Unknown sections or
keys are rejected by name; missing keys take the documented defaults, which
equal the acceptance tolerances of the verification suite.  A canonical
SHA-256 hash of the parsed (defaulted) configuration identifies a run, so
permuting key order cannot change the hash.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import Grid1D, Role, ScalarField, build_grid
from .params import PhysicalParams
from .sde import SdeConfig
from .stationary import SolverOptions

_F, _I, _B, _S = "float", "int", "bool", "str"
_FLIST = "float_list"

#: section -> key -> (type, default)
SCHEMA = {
    "grid": {
        "x_min": (_F, -7.0),
        "x_max": (_F, 7.0),
        "n": (_I, 161),
    },
    "potential": {
        "name": (_S, "harmonic"),       # harmonic | box | double_well | table
        "omega": (_F, 1.0),
        "a": (_F, 1.0),
        "b": (_F, 1.0),
        "table_path": (_S, ""),
    },
    "params": {
        "hbar": (_F, 1.0),
        "m": (_F, 1.0),
        "m0": (_F, 1.0),
        "nu": (_F, 2.5),
        "kT": (_F, 0.1),
        "gamma": (_F, 0.5),
    },
    "solver": {
        "tol": (_F, 1e-10),
        "max_iter": (_I, 400),
        "warmup_steps": (_I, 80),
        "warmup_dtau": (_F, 0.1),
        "mix": (_F, 0.6),
    },
    "sde": {
        "dt": (_F, 1e-3),
        "n_steps": (_I, 60),
        "n_paths": (_I, 100_000),
        "burn_in": (_I, 50),
        "hist_n": (_I, 81),
        "increment_paths": (_I, 20_000),
    },
    "kernel": {
        "dt": (_F, 0.0),                # 0 = automatic Courant-targeted step
        "times": (_FLIST, (0.25, 0.5, 1.0, 2.0, 5.0)),
        "backward_t": (_F, 0.3),
        "backward_spacing": (_F, 0.01),
        "detailed_balance_t": (_F, 0.3),
    },
    "force": {
        "n_s": (_I, 16),
        "s_max": (_F, 20.0),
        "dt": (_F, 0.0),                # 0 = automatic
        "mc_paths": (_I, 1000),
        "mc_dt": (_F, 2.5e-3),
        "mc_start_xs": (_FLIST, (-2.0, -1.0, 0.0, 1.0, 2.0)),
    },
    "sweep": {
        "parameter": (_S, ""),          # kT | gamma | nu | omega
        "values": (_FLIST, ()),
    },
    "run": {
        "seed": (_I, 12345),
    },
    "output": {
        "dump_samples": (_B, False),
        "dump_kernel": (_B, False),
    },
    "tolerances": {
        "solver_residual": (_F, 1e-8),
        "gausson_alpha_rel": (_F, 1e-3),
        "gausson_lambda_rel": (_F, 1e-3),
        "balance_max": (_F, 1e-6),
        "quantum_identity": (_F, 1e-12),
        "sde_hist_l1": (_F, 0.02),
        "increment_sigmas": (_F, 3.0),
        "kernel_mass": (_F, 1e-8),
        "ergodic_l1": (_F, 1e-3),
        "backward_rel": (_F, 2e-2),
        "detailed_balance_rel": (_F, 1e-6),
        "force_mc_sigmas": (_F, 3.0),
        "gibbs_rel": (_F, 2e-2),
        "operator_rel": (_F, 2e-2),
    },
}

SWEEPABLE = ("kT", "gamma", "nu", "omega")
POTENTIALS = ("harmonic", "box", "double_well", "table")


def _convert(section: str, key: str, kind: str, raw: str):
    where = f"{section}.{key}"
    try:
        if kind == _F:
            return float(raw)
        if kind == _I:
            return int(raw)
        if kind == _B:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == _FLIST:
            stripped = raw.strip()
            if not stripped:
                return ()
            return tuple(float(tok) for tok in stripped.split(","))
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"key {where!r}: cannot parse {raw!r} as {kind}", key=where) from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view over the defaulted section/key table."""

    sections: dict

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        sections = {s: dict(kv) for s, kv in self.sections.items()}
        sections["run"]["seed"] = int(seed)
        return ExperimentConfig(sections)

    def config_hash(self) -> str:
        canon = json.dumps(self.sections, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def grid(self) -> Grid1D:
        g = self.sections["grid"]
        return build_grid(g["x_min"], g["x_max"], g["n"])

    def potential(self, grid: Grid1D) -> ScalarField:
        p = self.sections["potential"]
        m = self.sections["params"]["m"]
        name = p["name"]
        if name == "harmonic":
            v = 0.5 * m * p["omega"] ** 2 * grid.x ** 2
        elif name == "box":
            v = np.zeros(grid.n)
        elif name == "double_well":
            v = p["a"] * (grid.x ** 2 - p["b"] ** 2) ** 2
        else:  # table
            v = _load_table(p["table_path"], grid)
        return ScalarField(grid, v, Role.POTENTIAL)

    def physical_params(self) -> PhysicalParams:
        p = self.sections["params"]
        kT = p["kT"]
        if kT > 0:
            tau = p["gamma"] / (2.0 * p["nu"] * kT)
        else:
            tau = 1.0  # placeholder; force stages require kT > 0
        return PhysicalParams.dimensionless(tau=tau, nu=p["nu"], kT=kT,
                                            hbar=p["hbar"], m=p["m"], m0=p["m0"])

    def solver_options(self) -> SolverOptions:
        s = self.sections["solver"]
        return SolverOptions(tol=s["tol"], max_iter=s["max_iter"],
                             warmup_steps=s["warmup_steps"],
                             warmup_dtau=s["warmup_dtau"], mix=s["mix"])

    def sde_config(self) -> SdeConfig:
        s = self.sections["sde"]
        return SdeConfig(dt=s["dt"], n_steps=s["n_steps"], n_paths=s["n_paths"],
                         burn_in=s["burn_in"], seed=self.seed,
                         nu=self.sections["params"]["nu"])

    def tolerance(self, name: str) -> float:
        return self.sections["tolerances"][name]


def _load_table(path: str, grid: Grid1D) -> np.ndarray:
    if not path:
        raise ConfigError("potential.table_path must be set for a table potential",
                          key="potential.table_path")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read potential table {path!r}: {exc}",
                          key="potential.table_path") from exc
    if data.shape[1] != 2 or data.shape[0] != grid.n:
        raise ConfigError(
            f"potential table must have {grid.n} rows of x,V; got shape {data.shape}",
            key="potential.table_path")
    if not np.allclose(data[:, 0], grid.x, atol=1e-9 * max(1.0, abs(grid.x_max))):
        raise ConfigError("potential table abscissas do not match the grid",
                          key="potential.table_path")
    return data[:, 1].copy()


def _validate(sections: dict):
    g = sections["grid"]
    if g["x_max"] <= g["x_min"]:
        raise ConfigError("grid.x_max must exceed grid.x_min", key="grid.x_max")
    if g["n"] < 3:
        raise ConfigError("grid.n must be at least 3", key="grid.n")
    p = sections["params"]
    if p["kT"] < 0:
        raise ConfigError("params.kT (temperature) must be nonnegative", key="params.kT")
    for key in ("hbar", "m", "m0", "nu", "gamma"):
        if p[key] <= 0:
            raise ConfigError(f"params.{key} must be positive", key=f"params.{key}")
    pot = sections["potential"]
    if pot["name"] not in POTENTIALS:
        raise ConfigError(f"unknown potential {pot['name']!r}; expected one of {POTENTIALS}",
                          key="potential.name")
    sw = sections["sweep"]
    if sw["parameter"]:
        if sw["parameter"] not in SWEEPABLE:
            raise ConfigError(f"sweep.parameter must be one of {SWEEPABLE}",
                              key="sweep.parameter")
        if not sw["values"]:
            raise ConfigError("sweep.values must be a nonempty list", key="sweep.values")
        if any(not np.isfinite(v) for v in sw["values"]):
            raise ConfigError("sweep.values must be finite", key="sweep.values")
    s = sections["sde"]
    if s["dt"] <= 0:
        raise ConfigError("sde.dt must be positive", key="sde.dt")
    if not 0 <= s["burn_in"] < s["n_steps"]:
        raise ConfigError("sde.burn_in must satisfy 0 <= burn_in < n_steps", key="sde.burn_in")
    if sections["run"]["seed"] < 0:
        raise ConfigError("run.seed must be nonnegative", key="run.seed")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document, filling defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (kT)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"config parse error: {exc}", line=line) from exc

    sections = {name: {k: v for k, (_, v) in keys.items()} for name, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}", key=section)
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section {section!r}",
                                  key=f"{section}.{key}")
            kind = SCHEMA[section][key][0]
            sections[section][key] = _convert(section, key, kind, raw)
    _validate(sections)
    return ExperimentConfig(sections)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())

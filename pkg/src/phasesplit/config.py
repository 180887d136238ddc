"""Experiment configuration: TOML files, built-in presets, validation.

A config file may name a ``preset`` and override any of its keys::

    preset = "young-sweep"
    eta = 1.5

    [phase0]
    E = 40.0
    nu = 0.25

Unknown keys are rejected.  Each phase takes either ``E``/``nu`` or
``mu``/``lambda``, never both.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .homogenize import LOAD_LABELS, load_case
from .material import IsotropicMaterial
from .objective import CostParams, Objective
from .optimizer import OptimizerConfig
from .phase_field import INTERPOLATIONS


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_EQUAL = {"E": 10.0, "nu": 0.25}

_BASE = {
    "dimension": 3,
    "schedule": [17, 33, 65],
    "loads": ["A11", "A22", "A33"],
    "beta": -0.25,
    "p": 2.0,
    "q_max": 8.0,
    "eta": 2.0,
    "delta": 1e-4,
    "interpolation": "quadratic",
    "aggregation": "pnorm",
    "seed": 0,
    "phase0": dict(_EQUAL),
    "phase1": dict(_EQUAL),
    "optimizer": {
        "method": "pgd",
        "max_iter": 500,
        "gtol": 1e-4,
        "ftol": 1e-7,
        "eps_factor": 2.0,
        "eps_mode": "finest",
    },
    "solver": {"tol": 1e-8, "max_iter": 0, "workers": 1},
    "output": {"directory": "out", "tile": 3, "isosurface_level": 0.0},
}

# Bone/polymer: only the stiffness ratio 15 is fixed, the polymer modulus of 10 is our choice.
PRESETS = {
    "equal-3compr": {"loads": ["A11", "A22", "A33"]},
    "equal-2compr-1shear": {"loads": ["A11", "A22", "A23"]},
    "equal-1compr-2shear": {"loads": ["A11", "A12", "A13"]},
    "eta-sweep": {
        "loads": ["A12", "A13", "A23"],
        "sweep": {"parameter": "eta", "values": [2.0, 4.0, 10.0]},
    },
    "p-sweep": {
        "loads": ["A11", "A22", "A23"],
        "sweep": {"parameter": "p", "values": [2.0, 4.0, 8.0, 16.0]},
    },
    "young-sweep": {
        "loads": ["A11", "A22", "A23"],
        "eta": 1.0,
        "phase0": {"E": 20.0, "nu": 0.25},
        "sweep": {"parameter": "phase0.E", "values": [20.0, 40.0, 80.0, 160.0, 320.0]},
    },
    "bone-polymer": {
        "loads": ["A11", "A12", "A13"],
        "phase0": {"E": 150.0, "nu": 0.1},
        "phase1": {"E": 10.0, "nu": 0.3},
    },
    "2d-2compr": {
        "dimension": 2,
        "loads": ["A11", "A22"],
        "schedule": [17, 33, 65],
        "output": {"directory": "out", "tile": 3, "isosurface_level": 0.0},
    },
}

_SWEEPABLE = ("eta", "p", "q_max", "delta", "phase0.E", "phase1.E", "phase0.nu", "phase1.nu")


@dataclass
class ExperimentConfig:
    """Validated experiment definition."""

    dimension: int
    schedule: list
    loads: list
    beta: float
    p: float
    q_max: float
    eta: float
    delta: float
    interpolation: str
    aggregation: str
    seed: int
    phase0: dict
    phase1: dict
    optimizer: dict
    solver: dict
    output: dict
    preset: str | None = None
    sweep: dict | None = None
    _materials: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    # -- validation --------------------------------------------------------
    def validate(self):
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension: must be 2 or 3, got {self.dimension!r}")
        if not self.loads:
            raise ConfigError("loads: at least one load is required")
        for lab in self.loads:
            if lab not in LOAD_LABELS:
                raise ConfigError(f"loads: unknown load {lab!r}")
            if max(int(lab[1]), int(lab[2])) > self.dimension:
                raise ConfigError(f"loads: {lab!r} does not exist in {self.dimension}D")
        if len(set(self.loads)) != len(self.loads):
            raise ConfigError("loads: duplicate entries")
        if not isinstance(self.beta, (int, float)) or self.beta == 0:
            raise ConfigError("beta: must be a nonzero number")
        if not self.p >= 1:
            raise ConfigError(f"p: must be >= 1, got {self.p}")
        if not self.q_max >= 1:
            raise ConfigError(f"q_max: must be >= 1, got {self.q_max}")
        if not self.eta >= 0:
            raise ConfigError(f"eta: must be >= 0, got {self.eta}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta: must lie in (0, 1), got {self.delta}")
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigError(f"interpolation: expected one of {INTERPOLATIONS}, got {self.interpolation!r}")
        if self.aggregation not in ("pnorm", "sum"):
            raise ConfigError(f"aggregation: expected 'pnorm' or 'sum', got {self.aggregation!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed: must be an integer")
        self._materials = (self._material("phase0", self.phase0), self._material("phase1", self.phase1))
        try:
            self.optimizer_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"optimizer/schedule: {exc}") from None
        _check_keys("solver", self.solver, ("tol", "max_iter", "workers"))
        if not self.solver.get("tol", 1e-8) > 0:
            raise ConfigError("solver.tol: must be positive")
        _check_keys("output", self.output, ("directory", "tile", "isosurface_level"))
        if int(self.output.get("tile", 1)) < 1:
            raise ConfigError("output.tile: must be >= 1")
        if self.sweep is not None:
            _check_keys("sweep", self.sweep, ("parameter", "values"))
            if self.sweep.get("parameter") not in _SWEEPABLE:
                raise ConfigError(f"sweep.parameter: must be one of {_SWEEPABLE}")
            if not self.sweep.get("values"):
                raise ConfigError("sweep.values: must be a non-empty list")

    @staticmethod
    def _material(key, entry):
        if not isinstance(entry, dict):
            raise ConfigError(f"{key}: must be a table")
        _check_keys(key, entry, ("E", "nu", "mu", "lambda"))
        young = "E" in entry or "nu" in entry
        lame = "mu" in entry or "lambda" in entry
        if young and lame:
            raise ConfigError(f"{key}: give either E/nu or mu/lambda, not both")
        try:
            if young:
                if "E" not in entry or "nu" not in entry:
                    raise ConfigError(f"{key}: both E and nu are required")
                nu = entry["nu"]
                if not 0 < nu < 0.5:
                    raise ConfigError(f"{key}.nu: Poisson ratio must lie in (0, 0.5), got {nu}")
                return IsotropicMaterial.from_young_poisson(entry["E"], nu)
            if "mu" not in entry or "lambda" not in entry:
                raise ConfigError(f"{key}: both mu and lambda are required")
            return IsotropicMaterial(entry["mu"], entry["lambda"])
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    # -- derived objects ---------------------------------------------------
    @property
    def materials(self):
        return self._materials

    def load_cases(self):
        return [load_case(lab, self.beta, self.dimension) for lab in self.loads]

    def cost_params(self):
        return CostParams(p=self.p, q_max=self.q_max, eta=self.eta, aggregation=self.aggregation)

    def optimizer_config(self):
        opts = dict(self.optimizer)
        _check_keys("optimizer", opts, tuple(OptimizerConfig.__dataclass_fields__))
        return OptimizerConfig(schedule=tuple(self.schedule), seed=self.seed, **opts)

    def make_objective(self, mesh, eps=None):
        max_iter = int(self.solver.get("max_iter", 0)) or None
        return Objective(
            mesh, self.materials, self.load_cases(), self.cost_params(), delta=self.delta,
            eps=eps, interpolation=self.interpolation, tol=self.solver.get("tol", 1e-8),
            max_iter=max_iter, workers=int(self.solver.get("workers", 1)),
        )

    def to_dict(self):
        out = {k: copy.deepcopy(getattr(self, k)) for k in _BASE}
        if self.preset is not None:
            out["preset"] = self.preset
        if self.sweep is not None:
            out["sweep"] = copy.deepcopy(self.sweep)
        return out

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def expand_sweep(self):
        """One config per sweep value (or ``[self]``) with labels."""
        if self.sweep is None:
            return [("", self)]
        out = []
        param = self.sweep["parameter"]
        for val in self.sweep["values"]:
            data = self.to_dict()
            data.pop("sweep")
            if "." in param:
                table, key = param.split(".")
                data[table] = {**data[table], key: val}
            else:
                data[param] = val
            out.append((f"{param}={val:g}", from_dict(data, use_preset=False)))
        return out


def _check_keys(where, data, allowed):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("phase0", "phase1"):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return from_dict({"preset": name})


def from_dict(data, use_preset=True):
    data = dict(data)
    _check_keys("config", data, tuple(_BASE) + ("preset", "sweep"))
    name = data.get("preset")
    merged = copy.deepcopy(_BASE)
    if name is not None and use_preset:
        if name not in PRESETS:
            raise ConfigError(f"preset: unknown preset {name!r}; available: {', '.join(PRESETS)}")
        merged = _merge(merged, PRESETS[name])
    merged = _merge(merged, data)
    for key in ("optimizer", "solver", "output"):
        if not isinstance(merged[key], dict):
            raise ConfigError(f"{key}: must be a table")
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None


def loads_text(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return from_dict(data)


def parse_config(path):
    """Read and validate a TOML experiment file, or a bare preset name."""
    p = Path(path)
    if not p.exists():
        if str(path) in PRESETS:
            return preset(str(path))
        raise ConfigError(f"config file {str(path)!r} does not exist")
    return loads_text(p.read_text())

"""Strictly validated run configuration, loaded from JSON and overridden by flags."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidParameter
from .model import CONFINEMENTS, ModelParams
from .spectral import DEFAULT_RULE_ORDER, Discrete, Semicircle, load_discrete_csv

COMMANDS = ("simulate", "solve", "phase", "compare")
ROUTES = ("fast", "picard", "both")
FORMATS = ("csv", "json", "both")
COORDINATE_MODES = ("rotated", "direct")


def parse_beta(value) -> float:
    """``beta`` as a float; the strings ``inf``/``infinity`` mean gradient flow."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"params.beta: expected a number or 'inf', got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"params.beta: expected a number or 'inf', got {value!r}")
    return float(value)


def _num(section, name, value, *, integer=False, positive=False, nonneg=False, lo=None, hi=None):
    where = f"{section}.{name}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{where}: must be non-negative, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{where}: must be >= {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where}: must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _choice(section, name, value, options):
    if value not in options:
        raise ConfigError(f"{section}.{name}: expected one of {list(options)}, got {value!r}")
    return value


@dataclass
class MeasureConfig:
    kind: str = "semicircle"
    sigma_star: float = 1.0
    atoms: Optional[list] = None
    weights: Optional[list] = None
    path: Optional[str] = None

    def validate(self):
        _choice("params.measure", "kind", self.kind, ("semicircle", "discrete"))
        if self.kind == "semicircle":
            self.sigma_star = _num("params.measure", "sigma_star", self.sigma_star, positive=True)
            if self.atoms is not None or self.weights is not None or self.path is not None:
                raise ConfigError("params.measure: atoms/weights/path only apply to kind 'discrete'")
        else:
            inline = self.atoms is not None or self.weights is not None
            if inline == (self.path is not None):
                raise ConfigError("params.measure: give either atoms+weights or path for kind 'discrete'")
            try:
                self.build()
            except InvalidParameter as exc:
                raise ConfigError(f"params.measure: {exc}") from exc

    def build(self):
        if self.kind == "semicircle":
            return Semicircle(self.sigma_star)
        if self.path is not None:
            return load_discrete_csv(self.path)
        return Discrete(np.asarray(self.atoms, dtype=float), np.asarray(self.weights, dtype=float))


@dataclass
class ParamsConfig:
    N: int = 2000
    # JSON key "lambda"; renamed here because it is a Python keyword
    lam: float = 1.0
    rho: float = 0.5
    beta: float = math.inf
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    confinement: str = "quadratic"

    def validate(self):
        self.N = _num("params", "N", self.N, integer=True, lo=1)
        self.lam = _num("params", "lambda", self.lam, positive=True)
        self.rho = _num("params", "rho", self.rho, lo=0.0, hi=1.0)
        self.beta = parse_beta(self.beta)
        if not self.beta > 0:
            raise ConfigError(f"params.beta: must be positive or 'inf', got {self.beta!r}")
        _choice("params", "confinement", self.confinement, tuple(CONFINEMENTS))
        self.measure.validate()

    def model_params(self) -> ModelParams:
        return ModelParams(N=self.N, lam=self.lam, rho=self.rho, beta=self.beta,
                           measure=self.measure.build(), confinement=self.confinement)


@dataclass
class GridConfig:
    T: float = 5.0
    dt: float = 2e-3

    def validate(self):
        self.T = _num("grid", "T", self.T, positive=True)
        self.dt = _num("grid", "dt", self.dt, positive=True)
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ConfigError(f"grid.T: {self.T} is not a positive integer multiple of grid.dt = {self.dt}")


@dataclass
class SolverConfig:
    rule_order: int = DEFAULT_RULE_ORDER
    tol: float = 1e-8
    max_iter: int = 200
    route: str = "fast"
    offdiag_every: Optional[int] = None

    def validate(self):
        self.rule_order = _num("solver", "rule_order", self.rule_order, integer=True, lo=1)
        self.tol = _num("solver", "tol", self.tol, positive=True)
        self.max_iter = _num("solver", "max_iter", self.max_iter, integer=True, lo=1)
        _choice("solver", "route", self.route, ROUTES)
        if self.offdiag_every is not None:
            self.offdiag_every = _num("solver", "offdiag_every", self.offdiag_every, integer=True, lo=1)


@dataclass
class EnsembleConfig:
    n_replicas: int = 16
    base_seed: int = 0
    coordinate_mode: str = "rotated"

    def validate(self):
        self.n_replicas = _num("ensemble", "n_replicas", self.n_replicas, integer=True, lo=1)
        self.base_seed = _num("ensemble", "base_seed", self.base_seed, integer=True, lo=0, hi=2 ** 64 - 1)
        _choice("ensemble", "coordinate_mode", self.coordinate_mode, COORDINATE_MODES)


@dataclass
class OutputConfig:
    directory: str = "out"
    format: str = "csv"

    def validate(self):
        if not isinstance(self.directory, str) or not self.directory:
            raise ConfigError(f"output.directory: expected a non-empty path, got {self.directory!r}")
        _choice("output", "format", self.format, FORMATS)


@dataclass
class PhaseConfig:
    lambda_min: float = 0.3
    lambda_max: float = 2.0
    lambda_steps: int = 10
    beta_min: float = 0.2
    beta_max: float = 5.0
    beta_steps: int = 10
    # explicit axis values override the ranges when given
    lambdas: Optional[list] = None
    betas: Optional[list] = None

    def validate(self):
        for axis in ("lambda", "beta"):
            lo = _num("phase", f"{axis}_min", getattr(self, f"{axis}_min"), positive=True)
            hi = _num("phase", f"{axis}_max", getattr(self, f"{axis}_max"), positive=True)
            steps = _num("phase", f"{axis}_steps", getattr(self, f"{axis}_steps"), integer=True, lo=2)
            if not hi > lo:
                raise ConfigError(f"phase.{axis}_max: must exceed {axis}_min ({hi} <= {lo})")
            setattr(self, f"{axis}_min", lo)
            setattr(self, f"{axis}_max", hi)
            setattr(self, f"{axis}_steps", steps)
        if self.lambdas is not None:
            if not isinstance(self.lambdas, list) or not self.lambdas:
                raise ConfigError("phase.lambdas: expected a non-empty list")
            self.lambdas = [_num("phase", f"lambdas[{i}]", v, positive=True) for i, v in enumerate(self.lambdas)]
        if self.betas is not None:
            if not isinstance(self.betas, list) or not self.betas:
                raise ConfigError("phase.betas: expected a non-empty list")
            betas = [parse_beta(v) for v in self.betas]
            for i, b in enumerate(betas):
                if not b > 0:
                    raise ConfigError(f"phase.betas[{i}]: must be positive or 'inf', got {b!r}")
            self.betas = betas

    def lambda_axis(self) -> list:
        if self.lambdas is not None:
            return list(self.lambdas)
        return np.linspace(self.lambda_min, self.lambda_max, self.lambda_steps).tolist()

    def beta_axis(self) -> list:
        if self.betas is not None:
            return list(self.betas)
        return np.linspace(self.beta_min, self.beta_max, self.beta_steps).tolist()


@dataclass
class RunConfig:
    command: str = "solve"
    params: ParamsConfig = field(default_factory=ParamsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    phase: PhaseConfig = field(default_factory=PhaseConfig)

    def validate(self) -> "RunConfig":
        _choice("config", "command", self.command, COMMANDS)
        for section in (self.params, self.grid, self.solver, self.ensemble, self.output, self.phase):
            section.validate()
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"]["lambda"] = d["params"].pop("lam")
        if math.isinf(d["params"]["beta"]):
            d["params"]["beta"] = "inf"
        if d["phase"]["betas"] is not None:
            d["phase"]["betas"] = ["inf" if math.isinf(b) else b for b in d["phase"]["betas"]]
        return d


_SECTIONS = {"params": ParamsConfig, "grid": GridConfig, "solver": SolverConfig,
             "ensemble": EnsembleConfig, "output": OutputConfig, "phase": PhaseConfig}
_RENAMES = {ParamsConfig: {"lambda": "lam"}}


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    renames = _RENAMES.get(cls, {})
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        name = renames.get(key, key)
        if name not in known or name in renames.values() and key not in renames:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if cls is ParamsConfig and name == "measure":
            value = _build(MeasureConfig, value, f"{where}.measure")
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> RunConfig:
    """Build a validated :class:`RunConfig`; unknown keys anywhere are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    kwargs = {}
    for key, value in raw.items():
        if key == "command":
            kwargs["command"] = value
        elif key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key)
        else:
            raise ConfigError(f"config: unknown key {key!r}")
    return RunConfig(**kwargs).validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return config_from_dict(raw)

# core/config.py
"""
Run configuration for the lab.
- Process defaults come from ENV (loaded from .env when present).
- Run configs are YAML files with blocks profile / domain / solver / source /
  experiment / output / tolerances / seed; each block maps onto a frozen dataclass.
- Validation happens before any computation: unknown keys, wrong types and out
  of range values raise ConfigError.
ENV:
  WARPLAB_OUTPUT_ROOT = "runs"      default output directory
  WARPLAB_LOG_LEVEL   = "INFO"
  WARPLAB_STRICT      = "0"         "1" turns on --strict by default
  WARPLAB_WORKERS     = "1"         sweep worker processes
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()

# ====== ENV ======
OUTPUT_ROOT = Path(os.getenv("WARPLAB_OUTPUT_ROOT", "runs"))
LOG_LEVEL = os.getenv("WARPLAB_LOG_LEVEL", "INFO").upper()
STRICT_DEFAULT = os.getenv("WARPLAB_STRICT", "0").strip().lower() in ("1", "true", "yes")
WORKERS_DEFAULT = int(os.getenv("WARPLAB_WORKERS", "1") or 1)

PROFILE_KINDS = ("spaceform-sphere", "spaceform-hyperbolic", "euclidean",
                 "schwarzschild", "reissner-nordstrom", "tabulated")
BOUNDARY_KINDS = ("graph", "ball")
TOPOLOGIES = ("null-homologous", "homologous-to-inner-slice")
SOURCE_KINDS = ("constant", "affine", "quadratic", "exponential")
EXPERIMENTS = ("verify-hypotheses", "solve-serrin", "solve-warped", "identities",
               "hk-deficit", "cmc-deficit", "sweep")
PROBLEMS = ("hk", "cmc", "serrin")
LINEAR_SOLVERS = ("cg", "direct")


# ------------ blocks ------------
@dataclass(frozen=True)
class ProfileConfig:
    kind: str = "schwarzschild"
    n: int = 2
    kappa: float = 0.0
    m: float = 0.5
    q: float = 0.0
    r_bar: Optional[float] = None
    theta_cap: float = 10.0
    table: Optional[str] = None
    grid_points: int = 400

    def __post_init__(self):
        _choice("profile.kind", self.kind, PROFILE_KINDS)
        _at_least("profile.n", self.n, 1)
        _choice("profile.kappa", self.kappa, (-1.0, 0.0, 1.0))
        _at_least("profile.m", self.m, 0.0)
        _at_least("profile.q", self.q, 0.0)
        if self.r_bar is not None and self.r_bar <= 0:
            raise ConfigError("profile.r_bar must be positive")
        if self.kind == "tabulated" and not self.table:
            raise ConfigError("profile.table is required for the tabulated kind")
        _at_least("profile.grid_points", self.grid_points, 8)

    def params(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"n": self.n, "kappa": self.kappa, "m": self.m, "q": self.q,
                               "theta_cap": self.theta_cap}
        if self.r_bar is not None:
            out["r_bar"] = self.r_bar
        if self.table:
            out["table"] = self.table
        return out


@dataclass(frozen=True)
class DomainConfig:
    boundary: str = "graph"
    r0: float = 2.0
    coefficients: Tuple[float, ...] = ()
    center: float = 0.0
    radius: float = 1.0
    topology: Optional[str] = None
    resolution: int = 128

    def __post_init__(self):
        _choice("domain.boundary", self.boundary, BOUNDARY_KINDS)
        if self.topology is not None:
            _choice("domain.topology", self.topology, TOPOLOGIES)
        if self.boundary == "graph" and self.r0 <= 0:
            raise ConfigError("domain.r0 must be positive")
        if self.boundary == "ball" and self.radius <= 0:
            raise ConfigError("domain.radius must be positive")
        _at_least("domain.resolution", self.resolution, 8)


@dataclass(frozen=True)
class SolverConfig:
    degree: int = 2
    h: float = 0.05
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    linear_tol: float = 1e-12
    linear_solver: str = "cg"
    linear_max_iter: int = 20000
    direct_fallback: bool = True
    hemisphere_margin: float = 0.05

    def __post_init__(self):
        if self.degree != 2:
            raise ConfigError("solver.degree: only quadratic elements (2) are available")
        if self.h <= 0:
            raise ConfigError("solver.h must be positive")
        for key in ("newton_tol", "linear_tol"):
            if not 0 < getattr(self, key) < 1:
                raise ConfigError(f"solver.{key} must lie in (0, 1)")
        _at_least("solver.newton_max_iter", self.newton_max_iter, 1)
        _at_least("solver.linear_max_iter", self.linear_max_iter, 1)
        _choice("solver.linear_solver", self.linear_solver, LINEAR_SOLVERS)
        _at_least("solver.hemisphere_margin", self.hemisphere_margin, 0.0)


@dataclass(frozen=True)
class SourceConfig:
    kind: str = "constant"
    coefficient: float = 1.0

    def __post_init__(self):
        _choice("source.kind", self.kind, SOURCE_KINDS)
        if self.kind == "constant" and self.coefficient <= 0:
            raise ConfigError("source.coefficient must be positive for a constant source")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "verify-hypotheses"
    problem: str = "hk"
    beta1: float = 0.5
    beta2: float = 1.0
    flow_levels: int = 8
    band_levels: int = 9
    T_cap: Optional[float] = None
    amplitudes: Tuple[float, ...] = (0.025, 0.05, 0.1, 0.2)
    family: Tuple[float, ...] = (1.0,)
    h_levels: Tuple[float, ...] = ()
    workers: int = WORKERS_DEFAULT

    def __post_init__(self):
        _choice("experiment.kind", self.kind, EXPERIMENTS)
        _choice("experiment.problem", self.problem, PROBLEMS)
        for key in ("beta1", "beta2"):
            if not 0 < getattr(self, key) <= 1:
                raise ConfigError(f"experiment.{key} must lie in (0, 1]")
        _at_least("experiment.flow_levels", self.flow_levels, 2)
        _at_least("experiment.band_levels", self.band_levels, 3)
        if self.T_cap is not None and self.T_cap <= 0:
            raise ConfigError("experiment.T_cap must be positive")
        if any(a < 0 for a in self.amplitudes):
            raise ConfigError("experiment.amplitudes must be non-negative")
        if any(h <= 0 for h in self.h_levels):
            raise ConfigError("experiment.h_levels must be positive")
        _at_least("experiment.workers", self.workers, 1)

    @property
    def beta(self) -> float:
        return min(self.beta1, self.beta2)


@dataclass(frozen=True)
class OutputConfig:
    dir: Optional[str] = None
    field_csv: bool = True
    mesh_dump: bool = False


@dataclass(frozen=True)
class TolerancesConfig:
    quadrature: float = 1e-5
    identity: float = 1e-3
    master_identity: float = 0.05
    ode: float = 1e-8

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"tolerances.{f.name} must be positive")


@dataclass(frozen=True)
class RunConfig:
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    tolerances: TolerancesConfig = field(default_factory=TolerancesConfig)
    seed: int = 0

    def output_dir(self) -> Path:
        return Path(self.output.dir) if self.output.dir else OUTPUT_ROOT / self.experiment.kind

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_BLOCKS = {
    "profile": ProfileConfig,
    "domain": DomainConfig,
    "solver": SolverConfig,
    "source": SourceConfig,
    "experiment": ExperimentConfig,
    "output": OutputConfig,
    "tolerances": TolerancesConfig,
}


# ------------ helpers ------------
def _choice(key: str, value, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"{key}={value!r} not in {list(allowed)}")


def _at_least(key: str, value, low) -> None:
    if value < low:
        raise ConfigError(f"{key}={value!r} must be >= {low}")


def _coerce(key: str, value, tp):
    """Check value against a dataclass annotation; ints are accepted for floats."""
    origin = get_origin(tp)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(key, value, args[0])
    if origin in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} must be a list, got {type(value).__name__}")
        inner = get_args(tp)[0]
        return tuple(_coerce(f"{key}[{i}]", v, inner) for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    return value


def _build_block(name: str, cls, raw) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"block '{name}' must be a mapping")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {unknown}")
    kwargs = {k: _coerce(f"{name}.{k}", v, hints[k]) for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"block '{name}': {exc}") from exc


# ---------------- Public API
def config_from_dict(data: Optional[Dict[str, Any]]) -> RunConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(_BLOCKS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}")
    blocks = {name: _build_block(name, cls, data.get(name)) for name, cls in _BLOCKS.items()}
    seed = _coerce("seed", data.get("seed", 0), int)
    return RunConfig(seed=seed, **blocks)


def load_config(path: Union[str, Path]) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {p}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{p} must contain a mapping at top level")
    return config_from_dict(data)


def with_overrides(cfg: RunConfig, *, h: Optional[float] = None, seed: Optional[int] = None,
                   out: Optional[str] = None, experiment: Optional[str] = None) -> RunConfig:
    """Apply command-line overrides; re-validates the touched blocks."""
    if h is not None:
        cfg = replace(cfg, solver=_build_block("solver", SolverConfig, {**asdict(cfg.solver), "h": h}))
    if experiment is not None:
        exp = {**asdict(cfg.experiment), "kind": experiment}
        cfg = replace(cfg, experiment=_build_block("experiment", ExperimentConfig, exp))
    if seed is not None:
        cfg = replace(cfg, seed=_coerce("seed", seed, int))
    if out is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=str(out)))
    return cfg

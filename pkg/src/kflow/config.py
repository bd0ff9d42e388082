"""Run configuration: a flat ``key = value`` text file with a versioned schema."""

from __future__ import annotations

import ast
import configparser
from dataclasses import asdict, dataclass, field, fields

from .flow import FlowConfig

SCHEMA = "kf-config v1"


class ConfigError(ValueError):
    pass


@dataclass
class AnalysisConfig:
    n_scales: int = 6
    r0: float | None = None
    sigma_samples: int = 64
    readout_tol: float = 0.05
    norm_tol: float = 0.05
    fit_fraction: float = 0.25
    slope_tol: float = 0.05
    ratio_tol: float = 2.0
    tol_mp: float = 1e-3
    mono_base_tol: float = 1e-2
    limit_R: float = 4.0
    conv_tol: float = 1e-2
    minimal_tol: float = 1e-2
    k_tol: float = 0.05
    eps_sym: float = 1e-3
    eps_lag: float = 1e-6
    sin_floor: float = 1e-6
    X0: tuple | None = None


@dataclass
class RunConfig:
    scenario: str = "round_sphere"
    resolution: int = 3
    seed: int = 0
    out: str = "runs/out"
    params: dict = field(default_factory=dict)
    flow: FlowConfig = field(default_factory=FlowConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    schema: str = SCHEMA

    def echo(self) -> dict:
        d = asdict(self)
        d["flow"] = self.flow.echo()
        return d

    def scenario_params(self) -> dict:
        p = dict(self.params)
        if self.scenario == "symplectic_perturbed_graph":
            p.setdefault("seed", self.seed)
        return p


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _coerce(cls, name, value):
    for f in fields(cls):
        if f.name == name:
            break
    else:
        raise ConfigError(f"unknown key {cls.__name__}.{name}")
    if value is None:
        return None
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    try:
        if kind.startswith("float"):
            return float(value)
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("tuple"):
            return tuple(float(v) for v in value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {name}: {value!r}") from err
    return value


def parse_config(text: str) -> RunConfig:
    """Parse the flat key-value format.

    Keys are ``scenario``, ``resolution``, ``seed``, ``out``, ``schema`` and
    dotted keys ``flow.*``, ``analysis.*`` and ``scenario.*`` (scenario parameters).
    """
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from err
    raw = {k: _value(v) for k, v in cp["run"].items()}
    schema = raw.pop("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r}; expected {SCHEMA!r}")
    flow, analysis, params, top = {}, {}, {}, {}
    for k, v in raw.items():
        if k.startswith("flow."):
            flow[k[5:]] = _coerce(FlowConfig, k[5:], v)
        elif k.startswith("analysis."):
            analysis[k[9:]] = _coerce(AnalysisConfig, k[9:], v)
        elif k.startswith("scenario."):
            params[k[9:]] = v
        elif k in ("scenario", "out"):
            top[k] = str(v)
        elif k in ("resolution", "seed"):
            top[k] = int(v)
        else:
            raise ConfigError(f"unknown key {k!r}")
    try:
        cfg = RunConfig(params=params, flow=FlowConfig(**flow), analysis=AnalysisConfig(**analysis), **top)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    a = cfg.analysis
    positive = {k: getattr(a, k) for k in ("readout_tol", "norm_tol", "slope_tol", "ratio_tol", "tol_mp",
                                          "mono_base_tol", "limit_R", "conv_tol", "minimal_tol", "k_tol",
                                          "eps_sym", "eps_lag", "sin_floor")}
    bad = [k for k, v in positive.items() if not v > 0]
    if bad:
        raise ConfigError(f"tolerances must be positive: {bad}")
    if cfg.resolution < 0:
        raise ConfigError("resolution must be nonnegative")


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config`; every knob is written out."""
    lines = [f"schema = {cfg.schema}", f"scenario = {cfg.scenario}", f"resolution = {cfg.resolution}",
             f"seed = {cfg.seed}", f"out = {cfg.out}"]
    lines += [f"scenario.{k} = {v!r}" for k, v in sorted(cfg.params.items())]
    lines += [f"flow.{k} = {v!r}" for k, v in cfg.flow.echo().items()]
    lines += [f"analysis.{k} = {v!r}" for k, v in asdict(cfg.analysis).items()]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())

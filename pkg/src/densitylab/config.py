"""Configuration parsing: flat key-value text with [section] headers.

Every key is validated against a per-section schema; unknown keys or
sections are rejected by name.  `serialize` writes a file that parses back
to an identical configuration, and the LAB_SEED environment variable
overrides the configured seed at load time.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .experiments import ExperimentConfig
from .kernels import DiracKernel, FractionalKernel, RieszKernel
from .measures import ExponentialJumpMeasure, PointMassMeasure, ZeroMeasure
from .rates import VasicekSpec
from .term_structure import CoefficientSpec, theta_max_default


class ConfigError(ValueError):
    pass


def _positive(x: float) -> float:
    if x <= 0:
        raise ValueError("positive real required")
    return x


def _nonnegative(x: float) -> float:
    if x < 0:
        raise ValueError("nonnegative real required")
    return x


def _unit(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError("value in [0, 1] required")
    return x


def _boolean(s: str) -> bool:
    low = str(s).strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("boolean required (true/false)")


def _choice(*options: str):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"one of {options} required")
        return s
    return parse


def _pair(s) -> tuple[float, float]:
    if isinstance(s, tuple):
        return s
    parts = [p.strip() for p in str(s).split(",")]
    if len(parts) != 2:
        raise ValueError("comma-separated pair required")
    lo, hi = float(parts[0]), float(parts[1])
    if hi <= lo:
        raise ValueError("range upper bound must exceed lower bound")
    return lo, hi


def _ridge(s) -> Any:
    if str(s).strip() == "auto":
        return "auto"
    return _nonnegative(float(s))


@dataclass(frozen=True)
class KernelConfig:
    type: str = "dirac"
    c0: float = 1.0
    alpha: float = 0.5
    h: float = 0.75
    quadrature_nodes: int = 32


@dataclass(frozen=True)
class MeasureConfig:
    type: str = "exponential"
    zeta: float = 10.0
    varpi: float = 1e-3
    z: float = 1.0
    quadrature_nodes: int = 32


@dataclass(frozen=True)
class ModelConfig:
    sigma: float = 0.001
    b: float = 1.0
    lambda_bar: float = 0.1
    delta_theta: float = 0.01
    delta_t: float = 0.01
    theta_max_rule: str = "10_over_lambda"
    clamp_lambda_at_zero: bool = False
    jump_sign_convention: str = "section7"


@dataclass(frozen=True)
class RatesConfig:
    mode: str = "constant"
    r: float = 0.05
    kappa: float = 1.0
    delta: float = 0.05
    r0: float = 0.05
    rho0: float = 0.01
    phi0: float = 0.0
    vasicek_formula: str = "standard"
    rates_correlated: bool = False


@dataclass(frozen=True)
class PideConfig:
    nx: int = 128
    ny: int = 128
    x_range: tuple[float, float] = (-0.05, 0.15)
    y_range: tuple[float, float] = (0.0, 0.4)
    n_steps: int = 200
    ridge_eps: Any = "auto"
    picard_mode: bool = False


@dataclass(frozen=True)
class PricingConfig:
    regime: str = "independent"
    recovery_type: str = "deterministic"
    R: float = 0.4
    w0: float = 0.3
    w1: float = 0.3
    f: str = "identity"


@dataclass(frozen=True)
class ExperimentSection:
    t: float = 0.5
    T: float = 1.0
    n_paths: int = 10_000
    seed: int = 12345
    workers: int = 1


@dataclass(frozen=True)
class Config:
    kernel: KernelConfig = field(default_factory=KernelConfig)
    levy_measure: MeasureConfig = field(default_factory=MeasureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    rates: RatesConfig = field(default_factory=RatesConfig)
    pide: PideConfig = field(default_factory=PideConfig)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)


_SCHEMA: dict[str, dict[str, Any]] = {
    "kernel": {
        "type": _choice("dirac", "riesz", "fractional", "tabulated"),
        "c0": lambda s: _positive(float(s)),
        "alpha": float,
        "h": float,
        "quadrature_nodes": lambda s: int(_positive(int(s))),
    },
    "levy_measure": {
        "type": _choice("exponential", "point_mass", "none"),
        "zeta": lambda s: _positive(float(s)),
        "varpi": lambda s: _nonnegative(float(s)),
        "z": lambda s: _positive(float(s)),
        "quadrature_nodes": lambda s: int(_positive(int(s))),
    },
    "model": {
        "sigma": float,
        "b": lambda s: _nonnegative(float(s)),
        "lambda_bar": lambda s: _positive(float(s)),
        "delta_theta": lambda s: _positive(float(s)),
        "delta_t": lambda s: _positive(float(s)),
        "theta_max_rule": str,
        "clamp_lambda_at_zero": _boolean,
        "jump_sign_convention": _choice("section7", "section3"),
    },
    "rates": {
        "mode": _choice("constant", "vasicek", "vasicek_jumps"),
        "r": float,
        "kappa": lambda s: _positive(float(s)),
        "delta": lambda s: _positive(float(s)),
        "r0": float,
        "rho0": float,
        "phi0": float,
        "vasicek_formula": _choice("standard", "paper_exact"),
        "rates_correlated": _boolean,
    },
    "pide": {
        "nx": lambda s: int(_positive(int(s))),
        "ny": lambda s: int(_positive(int(s))),
        "x_range": _pair,
        "y_range": _pair,
        "n_steps": lambda s: int(_positive(int(s))),
        "ridge_eps": _ridge,
        "picard_mode": _boolean,
    },
    "pricing": {
        "regime": _choice("independent", "correlated"),
        "recovery_type": _choice("deterministic", "intensity_linked"),
        "R": lambda s: _unit(float(s)),
        "w0": lambda s: _nonnegative(float(s)),
        "w1": lambda s: _nonnegative(float(s)),
        "f": _choice("identity", "none"),
    },
    "experiment": {
        "t": lambda s: _nonnegative(float(s)),
        "T": lambda s: _positive(float(s)),
        "n_paths": lambda s: int(_positive(int(s))),
        "seed": int,
        "workers": lambda s: int(_positive(int(s))),
    },
}

_SECTION_TYPES = {
    "kernel": KernelConfig,
    "levy_measure": MeasureConfig,
    "model": ModelConfig,
    "rates": RatesConfig,
    "pide": PideConfig,
    "pricing": PricingConfig,
    "experiment": ExperimentSection,
}


def _cross_validate(cfg: Config) -> Config:
    if cfg.pricing.w0 + cfg.pricing.w1 > 1.0 + 1e-12:
        raise ConfigError("[pricing] w0+w1 <= 1 violated")
    if cfg.experiment.T < cfg.experiment.t:
        raise ConfigError("[experiment] T must be >= t")
    if cfg.model.theta_max_rule != "10_over_lambda":
        try:
            _positive(float(cfg.model.theta_max_rule))
        except ValueError as exc:
            raise ConfigError(
                "[model] theta_max_rule: '10_over_lambda' or a positive real "
                f"required ({exc})") from exc
    return cfg


def parse_config(path: str | None) -> Config:
    """Load and validate a configuration; None or a missing body means defaults."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
    sections: dict[str, Any] = {}
    for name in parser.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        schema = _SCHEMA[name]
        kwargs = {}
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigError(f"[{name}] unknown key '{key}'")
            try:
                kwargs[key] = schema[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from exc
        sections[name] = _SECTION_TYPES[name](**kwargs)
    cfg = Config(**sections)
    seed_env = os.environ.get("LAB_SEED")
    if seed_env is not None:
        try:
            cfg = replace(cfg, experiment=replace(cfg.experiment, seed=int(seed_env)))
        except ValueError as exc:
            raise ConfigError(f"LAB_SEED: integer required ({exc})") from exc
    return _cross_validate(cfg)


def serialize(cfg: Config) -> str:
    """Config text that parses back to an identical configuration."""
    out = io.StringIO()
    for name, cls in _SECTION_TYPES.items():
        section = getattr(cfg, name if name != "levy_measure" else "levy_measure")
        out.write(f"[{name}]\n")
        for f in fields(cls):
            value = getattr(section, f.name)
            if isinstance(value, tuple):
                value = f"{value[0]},{value[1]}"
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            out.write(f"{f.name} = {value}\n")
        out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# object builders
# ---------------------------------------------------------------------------

def build_kernel(cfg: Config):
    k = cfg.kernel
    if k.type == "dirac":
        return DiracKernel(c0=k.c0, d=0)
    if k.type == "riesz":
        return RieszKernel(alpha=k.alpha)
    if k.type == "fractional":
        return FractionalKernel(h=k.h)
    raise ConfigError("tabulated kernels must be constructed programmatically "
                      "(no tabulation data in the flat config)")


def build_measure(cfg: Config):
    m = cfg.levy_measure
    if m.type == "none" or m.varpi == 0.0:
        return ZeroMeasure()
    if m.type == "exponential":
        return ExponentialJumpMeasure(zeta=m.zeta, varpi=m.varpi,
                                      quadrature_nodes=m.quadrature_nodes)
    return PointMassMeasure(z=m.z)


def build_model_spec(cfg: Config) -> CoefficientSpec:
    return CoefficientSpec.section7(sigma=cfg.model.sigma, b=cfg.model.b,
                                    lambda_bar=cfg.model.lambda_bar)


def build_rate_spec(cfg: Config) -> VasicekSpec:
    r = cfg.rates
    if r.mode == "constant":
        return VasicekSpec(kappa=r.kappa, delta=max(r.r, 1e-12), r0=r.r, rho0=0.0, phi0=0.0)
    phi0 = r.phi0 if r.mode == "vasicek_jumps" else 0.0
    return VasicekSpec(kappa=r.kappa, delta=r.delta, r0=r.r0, rho0=r.rho0, phi0=phi0)


def theta_max_from(cfg: Config) -> float:
    if cfg.model.theta_max_rule == "10_over_lambda":
        return theta_max_default(cfg.model.lambda_bar)
    return float(cfg.model.theta_max_rule)


def experiment_config(cfg: Config, **overrides) -> ExperimentConfig:
    base = dict(
        t=cfg.experiment.t, T=cfg.experiment.T, r=cfg.rates.r, R=cfg.pricing.R,
        b=cfg.model.b, zeta=cfg.levy_measure.zeta,
        varpi=cfg.levy_measure.varpi if cfg.levy_measure.type != "none" else 0.0,
        lambda_bar=cfg.model.lambda_bar, sigma=cfg.model.sigma,
        n_paths=cfg.experiment.n_paths, delta=cfg.model.delta_theta,
        delta_t=cfg.model.delta_t, seed=cfg.experiment.seed,
        jump_sign_convention=cfg.model.jump_sign_convention,
        theta_max=None if cfg.model.theta_max_rule == "10_over_lambda"
        else float(cfg.model.theta_max_rule),
        workers=cfg.experiment.workers,
    )
    base.update(overrides)
    return ExperimentConfig(**base)

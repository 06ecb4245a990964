"""Run configuration: an INI file with sections, overridden by command-line flags.

Precedence: command-line flag > config file > built-in default.
"""
from __future__ import annotations

import configparser
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DomainError
from .flowdata import DEFAULT_MIN_TNA


class ConfigError(DomainError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _mapping(text: str) -> dict:
    """'a: 0.5, b: 2' -> {'a': 0.5, 'b': 2.0}; order preserved."""
    out = {}
    for item in text.replace("\n", ",").split(","):
        if not item.strip():
            continue
        k, _, v = item.partition(":")
        if not _:
            raise ConfigError(f"expected 'name: value', got {item.strip()!r}")
        out[k.strip()] = float(v)
    return out


@dataclass
class RunConfig:
    flows: Optional[Path] = None
    bond: Optional[Path] = None
    stock: Optional[Path] = None
    vix: Optional[Path] = None
    concentration: Optional[Path] = None
    # filters
    min_tna: float = DEFAULT_MIN_TNA
    exclude_mandates: bool = False
    start: Optional[dt.date] = None
    end: Optional[dt.date] = None
    tna_weighted: bool = False
    # measures
    alpha: float = 0.99
    c: float = 2.0
    T_grid: list = field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0, 20.0, 50.0])
    reliability_floor: int = 200
    # fitting
    zi_method: str = "mle"
    effective_n: float = 1.0
    moment_weights: tuple = (1.0, 1.0, 1.0)
    copula_family: str = "clayton"
    copula_theta: Optional[float] = None
    copula_pearson: Optional[float] = None
    # simulation model
    model_n: int = 10
    model_weights: Optional[list] = None
    model_geometric_q: Optional[float] = None
    p_tilde: float = 0.1
    mu_tilde: float = 0.5
    sigma_tilde: float = 0.3
    n_sims: int = 100_000
    seed: int = 0
    chunk_size: int = 50_000
    horizon_days: int = 1
    rho_time: float = 0.0
    calibration_draws: int = 100_000
    dump_sample: bool = False
    sim_T: Optional[float] = None
    # stress
    triplets: dict = field(default_factory=dict)
    stress_from_fit: bool = False
    coherency: Optional[dict] = None
    # factors
    factor_h: int = 1
    vix_threshold: float = 30.0
    acf_max_order: int = 2
    fp_window: int = 60
    # output
    out_dir: Path = Path("redstress_out")
    formats: tuple = ("csv", "json")
    source: Optional[Path] = None

    def echo(self) -> dict:
        """Stable subset echoed into reports (paths as given, no absolute expansion)."""
        d = {}
        for k, v in self.__dict__.items():
            if k in ("out_dir", "source"):
                continue
            if isinstance(v, Path):
                v = v.name
            elif isinstance(v, dt.date):
                v = v.isoformat()
            elif isinstance(v, tuple):
                v = list(v)
            d[k] = v
        return d

    def validate(self, need=()):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if any(t <= 0 for t in self.T_grid):
            raise ConfigError("T grid must be positive")
        for name in need:
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"missing required input: {name}")
            if not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        for name in ("bond", "stock", "vix", "concentration"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")


def load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read(path, encoding="utf-8")
    base = path.parent
    cfg.source = path

    def p(sec, key):
        return (base / cp.get(sec, key)) if cp.has_option(sec, key) else None

    def get(sec, key, conv, attr):
        if cp.has_option(sec, key):
            raw = cp.get(sec, key)
            try:
                setattr(cfg, attr, conv(raw))
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None

    boolean = lambda s: configparser.ConfigParser.BOOLEAN_STATES[s.strip().lower()]
    date = lambda s: dt.date.fromisoformat(s.strip())

    for key in ("flows", "bond", "stock", "vix", "concentration"):
        if p("input", key) is not None:
            setattr(cfg, key, p("input", key))
    get("filter", "min_tna", float, "min_tna")
    get("filter", "exclude_mandates", boolean, "exclude_mandates")
    get("filter", "start", date, "start")
    get("filter", "end", date, "end")
    get("filter", "tna_weighted", boolean, "tna_weighted")
    get("measures", "alpha", float, "alpha")
    get("measures", "c", float, "c")
    get("measures", "T", _floats, "T_grid")
    get("measures", "reliability_floor", int, "reliability_floor")
    get("zi", "method", lambda s: s.strip().lower(), "zi_method")
    get("im", "effective_n", float, "effective_n")
    get("im", "moment_weights", lambda s: tuple(_floats(s)), "moment_weights")
    get("copula", "family", lambda s: s.strip().lower(), "copula_family")
    get("copula", "theta", float, "copula_theta")
    get("copula", "pearson", float, "copula_pearson")
    get("model", "n", int, "model_n")
    get("model", "weights", _floats, "model_weights")
    get("model", "geometric_q", float, "model_geometric_q")
    get("model", "p_tilde", float, "p_tilde")
    get("model", "mu_tilde", float, "mu_tilde")
    get("model", "sigma_tilde", float, "sigma_tilde")
    get("simulation", "n_sims", int, "n_sims")
    get("simulation", "seed", int, "seed")
    get("simulation", "chunk_size", int, "chunk_size")
    get("simulation", "horizon_days", int, "horizon_days")
    get("simulation", "rho_time", float, "rho_time")
    get("simulation", "calibration_draws", int, "calibration_draws")
    get("simulation", "dump_sample", boolean, "dump_sample")
    get("simulation", "T", float, "sim_T")
    get("stress", "from_fit", boolean, "stress_from_fit")
    if cp.has_section("stress.triplets"):
        for label, raw in cp.items("stress.triplets"):
            vals = _floats(raw)
            if len(vals) != 3:
                raise ConfigError(f"[stress.triplets] {label}: expected 'p, mu, sigma'")
            cfg.triplets[label] = tuple(vals)
    if cp.has_section("coherency"):
        sec = cp["coherency"]
        cfg.coherency = {"rule": sec.get("rule", "C3").strip().upper()}
        for key in ("investor_anchors", "fund_multipliers", "fund_anchors", "investor_multipliers"):
            if key in sec:
                cfg.coherency[key] = _mapping(sec[key])
    get("factors", "h", int, "factor_h")
    get("factors", "vix_threshold", float, "vix_threshold")
    get("factors", "max_order", int, "acf_max_order")
    get("factors", "window", int, "fp_window")
    if cp.has_option("output", "dir"):
        cfg.out_dir = base / cp.get("output", "dir")
    if cp.has_option("output", "format"):
        cfg.formats = tuple(f.strip() for f in cp.get("output", "format").split(",") if f.strip())
    return cfg


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "input", None):
        cfg.flows = Path(args.input)
    if getattr(args, "out", None):
        cfg.out_dir = Path(args.out)
    if getattr(args, "seed", None) is not None:
        cfg.seed = int(args.seed)
    if getattr(args, "alpha", None) is not None:
        cfg.alpha = float(args.alpha)
    if getattr(args, "format", None):
        cfg.formats = (args.format,)
    return cfg

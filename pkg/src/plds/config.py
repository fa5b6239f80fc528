"""Run configuration read from JSON, with validation and tolerance overrides."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PldsError
from .flow import CROSS_TOL
from .model import PwlCurve, SystemParams, build_curve
from .returnmap import TOL_CENTER, TOL_FIXEDPOINT
from .sewing import Section, Side

__all__ = [
    "ConfigError",
    "Tolerances",
    "ScanSettings",
    "MapSettings",
    "PortraitSettings",
    "RunConfig",
    "load_config",
    "parse_config",
]

TOL_KEYS = ("crossing", "fixedpoint", "center")


class ConfigError(PldsError, ValueError):
    """The configuration is malformed or inconsistent."""


@dataclass(frozen=True)
class Tolerances:
    crossing: float = CROSS_TOL
    fixedpoint: float = TOL_FIXEDPOINT
    center: float = TOL_CENTER


@dataclass(frozen=True)
class ScanSettings:
    alpha_range: tuple[float, float] = (0.2, 4.0)
    beta_range: tuple[float, float] = (0.5, 6.0)
    na: int = 50
    nb: int = 50
    n_samples: int = 48
    max_crossings: int = 60


@dataclass(frozen=True)
class MapSettings:
    section: Section = Section(1, Side.Below)
    s_range: tuple[float, float] | None = None
    n: int = 200
    spacing: str = "log"


@dataclass(frozen=True)
class PortraitSettings:
    seeds: tuple[tuple[float, float], ...] = ()
    max_crossings: int = 60
    t_max: float = 60.0
    csv_dir: str | None = None


@dataclass
class RunConfig:
    curve: PwlCurve
    params: SystemParams | None = None
    tol: Tolerances = field(default_factory=Tolerances)
    scan: ScanSettings = field(default_factory=ScanSettings)
    map: MapSettings = field(default_factory=MapSettings)
    portrait: PortraitSettings = field(default_factory=PortraitSettings)
    input: str | None = None
    source: str | None = None

    def require_params(self) -> SystemParams:
        if self.params is None:
            raise ConfigError("this command needs 'alpha' and 'beta' in the configuration")
        return self.params


def _number(v, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{name}' must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"'{name}' must be finite")
    return v


def _positive(v, name: str) -> float:
    v = _number(v, name)
    if v <= 0.0:
        raise ConfigError(f"'{name}' must be positive, got {v}")
    return v


def _count(v, name: str, lo: int = 1) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"'{name}' must be an integer >= {lo}, got {v!r}")
    return v


def _range(v, name: str, strict: bool = True) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"'{name}' must be a [lo, hi] pair")
    lo, hi = _positive(v[0], name), _positive(v[1], name)
    if hi < lo or (strict and hi == lo):
        raise ConfigError(f"'{name}' is not well ordered: [{lo}, {hi}]")
    return lo, hi


def _table(raw: dict, key: str) -> dict:
    t = raw.get(key, {})
    if not isinstance(t, dict):
        raise ConfigError(f"'{key}' must be an object")
    return t


def _tolerances(raw: dict) -> Tolerances:
    vals = {}
    nested = _table(raw, "tol")
    for k in nested:
        if k not in TOL_KEYS:
            raise ConfigError(f"unknown tolerance key 'tol.{k}'")
    for k in TOL_KEYS:
        if f"tol.{k}" in raw:
            vals[k] = _positive(raw[f"tol.{k}"], f"tol.{k}")
        elif k in nested:
            vals[k] = _positive(nested[k], f"tol.{k}")
    return Tolerances(**vals)


def parse_config(raw, source: str | None = None) -> RunConfig:
    """Validate a decoded JSON object and build the run configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in ("k1", "k2", "corners"):
        if key not in raw:
            raise ConfigError(f"missing required key '{key}'")
    corners = raw["corners"]
    if not isinstance(corners, list) or not all(isinstance(c, (list, tuple)) and len(c) == 2 for c in corners):
        raise ConfigError("'corners' must be a list of [x, y] pairs")
    pts = [(_number(x, "corners"), _number(y, "corners")) for x, y in corners]
    try:
        curve = build_curve(pts, _number(raw["k1"], "k1"), _number(raw["k2"], "k2"))
    except (PldsError, ValueError) as exc:
        raise ConfigError(f"invalid curve: {exc}") from exc

    params = None
    if "alpha" in raw or "beta" in raw:
        if "alpha" not in raw or "beta" not in raw:
            raise ConfigError("'alpha' and 'beta' must be given together")
        params = SystemParams(_positive(raw["alpha"], "alpha"), _positive(raw["beta"], "beta"))

    s = _table(raw, "scan")
    scan = ScanSettings(
        alpha_range=_range(s.get("alpha_range", ScanSettings.alpha_range), "scan.alpha_range", s.get("na", 50) != 1),
        beta_range=_range(s.get("beta_range", ScanSettings.beta_range), "scan.beta_range", s.get("nb", 50) != 1),
        na=_count(s.get("na", ScanSettings.na), "scan.na"),
        nb=_count(s.get("nb", ScanSettings.nb), "scan.nb"),
        n_samples=_count(s.get("n_samples", ScanSettings.n_samples), "scan.n_samples", 2),
        max_crossings=_count(s.get("max_crossings", ScanSettings.max_crossings), "scan.max_crossings"),
    )

    m = _table(raw, "map")
    corner = _count(m.get("corner", 1), "map.corner")
    if corner > len(curve.corners):
        raise ConfigError(f"'map.corner' must be at most {len(curve.corners)}")
    try:
        side = Side(m.get("side", "Below"))
    except ValueError as exc:
        raise ConfigError("'map.side' must be 'Below' or 'Above'") from exc
    spacing = m.get("spacing", "log")
    if spacing not in ("log", "linear"):
        raise ConfigError("'map.spacing' must be 'log' or 'linear'")
    mp = MapSettings(
        section=Section(corner, side),
        s_range=_range(m["s_range"], "map.s_range") if "s_range" in m else None,
        n=_count(m.get("n", 200), "map.n", 2),
        spacing=spacing,
    )

    p = _table(raw, "portrait")
    seeds = p.get("seeds", [])
    if not isinstance(seeds, list) or not all(isinstance(q, (list, tuple)) and len(q) == 2 for q in seeds):
        raise ConfigError("'portrait.seeds' must be a list of [x, y] pairs")
    csv_dir = p.get("csv_dir")
    if csv_dir is not None and not isinstance(csv_dir, str):
        raise ConfigError("'portrait.csv_dir' must be a path string")
    pt = PortraitSettings(
        seeds=tuple((_number(x, "portrait.seeds"), _number(y, "portrait.seeds")) for x, y in seeds),
        max_crossings=_count(p.get("max_crossings", 60), "portrait.max_crossings"),
        t_max=_positive(p.get("t_max", 60.0), "portrait.t_max"),
        csv_dir=csv_dir,
    )

    inp = raw.get("input")
    if inp is not None and not isinstance(inp, str):
        raise ConfigError("'input' must be a path string")
    return RunConfig(curve, params, _tolerances(raw), scan, mp, pt, inp, source)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(raw, str(path))

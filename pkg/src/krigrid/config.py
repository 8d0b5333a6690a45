"""Flat ``key = value`` benchmark configuration.

Example::

    fields = maps/000.png, maps/001.png
    weed_colour = 255,0,0
    n_samples = 500
    window = 150
    variogram = exponential
    grid_long_side = 1024
    trials = 10
    base_seed = 0
    out = results
    quadtree.hom_thresh = 2e-4
    hexmap.error_thresholds = 2e-4,2e-4,2e-4,2e-4
    features.dbscan_eps = 3

Relative field paths resolve against the config file's directory.  Keys
prefixed with a representation kind become keyword arguments of that
builder; ``features.`` keys set the feature-extraction options.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field, fields, replace
from os import PathLike
from pathlib import Path
from typing import Any

from .kriging import VARIOGRAM_KINDS, parse_key_values
from .raster_io import DEFAULT_WEED_COLOUR, LABEL_COLOURS, parse_colour
from .representations import BUILDERS, KINDS
from .spatial_features import FeatureConfig


class ConfigError(ValueError):
    pass


def _coerce(text: str, default: Any, key: str):
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def builder_defaults(kind: str) -> dict[str, Any]:
    sig = inspect.signature(BUILDERS[kind])
    return {name: p.default for name, p in list(sig.parameters.items())[1:]}


@dataclass(frozen=True)
class BenchConfig:
    fields: tuple[Path, ...]
    weed_colour: tuple[int, int, int] = DEFAULT_WEED_COLOUR
    n_samples: int = 500
    window: int = 150
    variogram: str = "exponential"
    n_lags: int = 20
    grid_long_side: int = 1024
    trials: int = 10
    base_seed: int = 0
    out: Path = Path("results")
    render_trial: int = 0
    repr_params: dict[str, dict[str, Any]] = field(default_factory=dict)
    features: FeatureConfig = FeatureConfig()

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.n_samples < 3:
            raise ConfigError("n_samples must be >= 3")
        if self.window < 1 or self.grid_long_side < 1:
            raise ConfigError("window and grid_long_side must be >= 1")
        if self.variogram not in VARIOGRAM_KINDS:
            raise ConfigError(f"unknown variogram {self.variogram!r}")
        if not self.fields:
            raise ConfigError("no fields configured")
        if tuple(self.weed_colour) not in LABEL_COLOURS:
            raise ConfigError(f"weed colour must be one of the label colours {LABEL_COLOURS}, got {self.weed_colour}")

    def map_names(self) -> list[str]:
        names = [p.stem for p in self.fields]
        if len(set(names)) != len(names):
            raise ConfigError(f"field file stems must be unique, got {names}")
        return names

    def params(self, kind: str) -> dict[str, Any]:
        return dict(self.repr_params.get(kind, {}))

    def check_paths(self) -> None:
        missing = [str(p) for p in self.fields if not p.is_file()]
        if missing:
            raise ConfigError(f"missing field files: {', '.join(missing)}")

    def with_overrides(self, **kw) -> "BenchConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        out = {
            "fields": [str(p) for p in self.fields],
            "weed_colour": list(self.weed_colour),
            "n_samples": self.n_samples,
            "window": self.window,
            "variogram": self.variogram,
            "n_lags": self.n_lags,
            "grid_long_side": self.grid_long_side,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "out": str(self.out),
            "render_trial": self.render_trial,
        }
        for kind in KINDS:
            params = builder_defaults(kind)
            params.update(self.params(kind))
            out[kind] = {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}
        out["features"] = {f.name: getattr(self.features, f.name) for f in fields(FeatureConfig)}
        return out


_SCALARS = ("n_samples", "window", "variogram", "n_lags", "grid_long_side", "trials", "base_seed", "render_trial")


def parse_config(text: str, base_dir: PathLike = ".") -> BenchConfig:
    kv = parse_key_values(text)
    base = Path(base_dir)
    kw: dict[str, Any] = {}
    repr_params: dict[str, dict[str, Any]] = {}
    feats: dict[str, Any] = {}
    feat_defaults = {f.name: f.default for f in fields(FeatureConfig)}
    plain_defaults = {f.name: f.default for f in fields(BenchConfig) if f.name in _SCALARS}
    for key, value in kv.items():
        if key == "fields":
            paths = [v.strip() for v in value.split(",") if v.strip()]
            kw["fields"] = tuple(p if p.is_absolute() else base / p for p in map(Path, paths))
        elif key == "weed_colour":
            kw["weed_colour"] = parse_colour(value)
        elif key == "out":
            kw["out"] = Path(value) if Path(value).is_absolute() else base / value
        elif key in plain_defaults:
            kw[key] = _coerce(value, plain_defaults[key], key)
        elif "." in key:
            prefix, name = key.split(".", 1)
            if prefix == "features":
                if name not in feat_defaults:
                    raise ConfigError(f"unknown feature option {name!r}")
                feats[name] = _coerce(value, feat_defaults[name], key)
            elif prefix in BUILDERS:
                defaults = builder_defaults(prefix)
                if name not in defaults:
                    raise ConfigError(f"{prefix} has no parameter {name!r}; known: {sorted(defaults)}")
                repr_params.setdefault(prefix, {})[name] = _coerce(value, defaults[name], key)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "fields" not in kw:
        raise ConfigError("config must list 'fields'")
    return BenchConfig(repr_params=repr_params, features=FeatureConfig(**feats), **kw)


def load_config(path: PathLike) -> BenchConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), p.parent)

"""Run configuration: defaults, TOML files, and CLI overrides.

Precedence: CLI flags > config file > defaults. Unknown keys in a config
file are a hard error so typos never silently fall back to defaults.
"""

import dataclasses
import json
import sys

from .mapping import MapperConfig
from .track import TrackerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclasses.dataclass
class RunConfig:
    dataset: str = ""
    format: str = "synthetic"           # tum | replica | synthetic
    out: str = "runs/out"
    seed: int = 0
    render_every: int = 10              # keyframes between saved renders
    tracker: TrackerConfig = dataclasses.field(default_factory=TrackerConfig)
    mapper: MapperConfig = dataclasses.field(default_factory=MapperConfig)


_SECTIONS = {"tracker": TrackerConfig, "mapper": MapperConfig}


def _apply(obj, values, where):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, val in values.items():
        if key not in names:
            raise ValueError(f"unknown config key {where}{key}")
        if isinstance(val, list):
            val = tuple(val)
        setattr(obj, key, val)


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional TOML file plus override dict."""
    cfg = RunConfig()
    if path is not None:
        with open(path, "rb") as f:
            data = tomllib.load(f)
        for section, sub_cls in _SECTIONS.items():
            sub = data.pop(section, {})
            if not isinstance(sub, dict):
                raise ValueError(f"[{section}] must be a table")
            _apply(getattr(cfg, section), sub, f"{section}.")
        _apply(cfg, data, "")
    if overrides:
        _apply(cfg, {k: v for k, v in overrides.items() if v is not None}, "")
    # one seed drives every stochastic component unless set explicitly
    cfg.tracker.seed = cfg.seed
    cfg.mapper.seed = cfg.seed + 1
    return cfg


def config_metadata(cfg):
    """Every effective value, defaults included, for the run metadata file."""
    return dataclasses.asdict(cfg)


def write_metadata(cfg, path, extra=None):
    meta = config_metadata(cfg)
    if extra:
        meta.update(extra)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True, default=str)
        f.write("\n")

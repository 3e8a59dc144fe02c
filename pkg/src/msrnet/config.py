"""Flat run configuration: defaults, then a TOML file, then CLI overrides.

The file is a flat TOML table, e.g.::

    n = 4
    v = [1.0, 10.0, 100.0, 300.0]
    K = 10
    max_iters = 10000
    batch = 8
    lam = 1e-6

Unknown keys and wrongly typed values are rejected.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import MsrNetConfig
from .nn import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # architecture
    n: int = 4
    v: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 300.0])
    K: int = 10
    width: int = 32
    kernel_hidden: int = 3
    patch: int = 64
    # optimisation
    lr0: float = 1e-4
    lr_drop_iters: list = field(default_factory=lambda: [100_000, 200_000])
    lr_drop_factor: float = 10.0
    max_iters: int = 300_000
    batch: int = 64
    lam: float = 1e-6
    seed: int = 0
    # data and logging
    patches_per_pair: int = 16
    log_every: int = 100
    checkpoint_every: int = 10_000
    angular_mode: str = "global"

    def model_config(self) -> MsrNetConfig:
        return MsrNetConfig(n=self.n, v=list(self.v), K=self.K, width=self.width,
                            kernel_hidden=self.kernel_hidden, patch=self.patch)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr0=self.lr0, lr_drop_iters=list(self.lr_drop_iters),
                           lr_drop_factor=self.lr_drop_factor, max_iters=self.max_iters,
                           batch=self.batch, lam=self.lam, seed=self.seed)

    def validate(self) -> "RunConfig":
        try:
            self.model_config()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.patches_per_pair < 1:
            raise ConfigError("patches_per_pair must be >= 1")
        if self.angular_mode not in ("global", "perpixel"):
            raise ConfigError(f"angular_mode must be global or perpixel, not {self.angular_mode}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, directory, name: str = "resolved_config.json", **extra) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / name
        path.write_text(json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True))
        return path


def _coerce(name: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"{name}: expected {type(default).__name__}, got {value!r}")
    return value


def load_run_config(path: Optional[Path] = None, overrides: Optional[dict] = None) -> RunConfig:
    cfg = RunConfig()
    defaults = cfg.to_dict()
    known = {f.name for f in fields(RunConfig)}
    layers = []
    if path is not None:
        try:
            layers.append(tomllib.loads(Path(path).read_text()))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    layers.append({k: v for k, v in (overrides or {}).items() if v is not None})
    explicit = set()
    for layer in layers:
        explicit.update(layer)
        for key, value in layer.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(value, dict):
                raise ConfigError(f"{key}: nested tables are not allowed")
            setattr(cfg, key, _coerce(key, value, defaults[key]))
    try:
        cfg.v = [float(x) for x in cfg.v]
        cfg.lr_drop_iters = [int(x) for x in cfg.lr_drop_iters]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad list value: {exc}") from exc
    if "lr_drop_iters" not in explicit:
        # default drops that a shortened run never reaches are simply dropped
        cfg.lr_drop_iters = [d for d in cfg.lr_drop_iters if d < cfg.max_iters]
    return cfg.validate()

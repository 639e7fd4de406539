"""Run configuration: a flat, typed key/value set mirroring the hyperparameter table."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ABLATIONS = ("full", "no-graph-reg", "no-iterative")
SELECTIONS = ("accuracy", "loss")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # graph learning
    lam: float = 0.8          # weight of the initial graph
    eta: float = 0.7          # weight of the refined graph vs the initial learned graph
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    knn_k: int = 20
    epsilon: float = 0.0
    heads: int = 1
    stop_delta: float = 1e-3
    max_iters: int = 10
    ablation: str = "full"
    # model and optimiser
    hidden: int = 16
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    iter_dropout: float = 0.5
    max_epochs: int = 1000
    patience: int = 100
    select_on: str = "accuracy"  # dev metric for early stopping / best epoch
    seed: int = 0
    # data
    dataset: str = ""
    features: str = ""
    labels: str = ""
    edges: str = ""
    split_dir: str = ""
    split: tuple[int, int, int] = (0, 0, 0)
    split_seed: int = 0
    feature_norm: str = ""
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0 and 0.0 <= self.eta <= 1.0):
            raise ConfigError("lambda and eta must lie in [0, 1]")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("alpha, beta and gamma must be non-negative")
        if self.stop_delta <= 0:
            raise ConfigError("stop_delta must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1 (use ablation = 'no-iterative' to skip refinement)")
        if self.knn_k < 1 or self.heads < 1 or self.hidden < 1:
            raise ConfigError("knn_k, heads and hidden must be >= 1")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.select_on not in SELECTIONS:
            raise ConfigError(f"select_on must be one of {SELECTIONS}, got {self.select_on!r}")
        if not (0.0 <= self.dropout < 1.0 and 0.0 <= self.iter_dropout < 1.0):
            raise ConfigError("dropout rates must lie in [0, 1)")

    @property
    def iterations_enabled(self) -> bool:
        return self.ablation != "no-iterative"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[_EXTERNAL.get(f.name, f.name)] = list(v) if isinstance(v, tuple) else v
        return out


# file keys that differ from attribute names
_EXTERNAL = {"lam": "lambda", "knn_k": "k"}
_INTERNAL = {v: k for k, v in _EXTERNAL.items()}
_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def valid_keys() -> list[str]:
    return sorted(_EXTERNAL.get(k, k) for k in _FIELDS)


def _coerce(name: str, value: Any) -> Any:
    default = _FIELDS[name].default
    if isinstance(default, tuple):
        if isinstance(value, str):
            value = [v for v in value.replace("[", "").replace("]", "").split(",") if v.strip()]
        return tuple(int(v) for v in value)
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        f = float(value)
        if f != int(f):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(f)
    if isinstance(default, float):
        return float(value)
    return str(value)


def from_mapping(values: Mapping[str, Any], base: Optional[RunConfig] = None) -> RunConfig:
    changes = {}
    for key, value in values.items():
        name = _INTERNAL.get(key, key)
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
        try:
            changes[name] = _coerce(name, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None
    return (base or RunConfig()).replace(**changes)


def load_config(path: Path, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Read a TOML file (flat keys) and apply ``overrides`` on top."""
    path = Path(path)
    if not path.exists():
        bundled = Path(__file__).parent / "configs" / f"{path.name.removesuffix('.toml')}.toml"
        if not bundled.exists():
            raise ConfigError(f"config file not found: {path}")
        path = bundled
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    cfg = from_mapping(raw)
    base_dir = path.parent
    # data paths are relative to the config file
    fixes = {}
    for key in ("features", "labels", "edges", "split_dir"):
        v = getattr(cfg, key)
        if v and not Path(v).is_absolute():
            fixes[key] = str((base_dir / v).resolve())
    if fixes:
        cfg = cfg.replace(**fixes)
    if overrides:
        cfg = from_mapping(overrides, cfg)
    return cfg


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def ablation_mode(config: RunConfig, mode: str) -> RunConfig:
    """Derive the ablation variant: zero the regularisers or drop refinement."""
    if mode not in ABLATIONS:
        raise ConfigError(f"unknown ablation {mode!r}")
    if mode == "full":
        return config
    if mode == "no-graph-reg":
        return config.replace(alpha=0.0, beta=0.0, gamma=0.0, ablation=mode)
    return config.replace(ablation=mode)

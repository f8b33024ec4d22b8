"""Run configuration: a YAML key/value tree mapped onto typed defaults.

Every key has a default (see ``visbackdoor --print-config``).  Unknown keys are
rejected.  Stage seeds are not configurable: they are derived from the single
global ``seed``.  Fractions such as ``"8/255"`` are accepted wherever a float is
expected.
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .agent.training import TrainConfig
from .gui.dataset import DatasetConfig
from .pipeline import EvalSettings, ExperimentConfig, ModelSettings
from .poison.craft import PoisonConfig
from .triggers.compose import TriggerSpec

ENV_WORKSPACE = "VISBACKDOOR_WORKSPACE"
ENV_WORKERS = "VISBACKDOOR_WORKERS"
DERIVED = {"seed"}  # per-stage fields owned by the global seed


class ConfigError(ValueError):
    """Invalid configuration tree."""


@dataclass
class Paths:
    workspace: str = "workspace"
    dataset: str = "dataset"
    poisoned: str = "poisoned"
    checkpoints: str = "checkpoints"
    reports: str = "reports"

    def resolve(self, name: str) -> Path:
        p = Path(getattr(self, name))
        return p if name == "workspace" or p.is_absolute() else Path(self.workspace) / p


@dataclass
class TriggerSettings:
    kind: str = "hoverball"
    size_fraction: Optional[float] = None
    position: Union[None, str, list] = None
    opacity: float = 0.2
    pattern: Optional[str] = None

    def spec(self) -> TriggerSpec:
        pattern = self.pattern
        if pattern is not None and pattern.startswith("png:"):
            from .triggers.compose import load_png_pattern
            pattern = load_png_pattern(pattern[4:])
        pos = tuple(self.position) if isinstance(self.position, list) else self.position
        return TriggerSpec(self.kind, self.size_fraction, pos, self.opacity, pattern)


@dataclass
class AblationSettings:
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    sweep: dict = field(default_factory=lambda: {"eps": ["4/255", "8/255", "12/255", "16/255"]})


@dataclass
class RunConfig:
    seed: int = 0
    attack_type: str = "I"
    selection: str = "target-label"
    workers: int = 1
    paths: Paths = field(default_factory=Paths)
    data: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelSettings = field(default_factory=ModelSettings)
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    poison: PoisonConfig = field(default_factory=PoisonConfig)
    trigger: TriggerSettings = field(default_factory=lambda: TriggerSettings(size_fraction=0.001))
    eval: EvalSettings = field(default_factory=lambda: EvalSettings(corruptions=("resize80", "jpeg50", "crop20")))
    ablation: AblationSettings = field(default_factory=AblationSettings)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(seed=self.seed, attack_type=self.attack_type, selection=self.selection,
                                data=self.data, model=self.model, pretrain=self.pretrain, train=self.train,
                                poison=self.poison, trigger=self.trigger.spec(), eval=self.eval)

    def sweep(self) -> dict:
        return {dim: [_number(v) if dim != "position" and dim != "kind" else v for v in vals]
                for dim, vals in self.ablation.sweep.items()}


def _number(v):
    if isinstance(v, str):
        try:
            return float(Fraction(v.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"not a number: {v!r}") from None
    return v


def _coerce(value: Any, hint, where: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is Union:
        if value is None and type(None) in args:
            return None
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(value, a, where)
            except ConfigError:
                continue
        raise ConfigError(f"{where}: cannot interpret {value!r}")
    if dataclasses.is_dataclass(hint):
        return build(hint, value, where)
    if hint is float:
        v = _number(value)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(v)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if origin is tuple or hint is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if args and args[-1] is not Ellipsis:
            if len(args) != len(value):
                raise ConfigError(f"{where}: expected {len(args)} entries")
            return tuple(_coerce(v, a, where) for v, a in zip(value, args))
        if args:
            return tuple(_coerce(v, args[0], where) for v in value)
        return tuple(_number(v) for v in value)
    if origin is list or hint is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return list(value)
    if origin is dict or hint is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {value!r}")
        return dict(value)
    return value


def build(cls, tree: Optional[dict], where: str = "", base=None):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys.

    Keys absent from ``tree`` keep their values in ``base`` (default: ``cls()``),
    so a partial nested section only overrides what it names.
    """
    tree = {} if tree is None else tree
    if not isinstance(tree, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    allowed = names - DERIVED if where else names
    unknown = sorted(set(tree) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join((where + '.' if where else '') + k for k in unknown)}")
    base = cls() if base is None else base
    kwargs = {}
    for k, v in tree.items():
        key = f"{where}.{k}" if where else k
        if dataclasses.is_dataclass(hints[k]):
            kwargs[k] = build(hints[k], v, key, getattr(base, k))
        else:
            kwargs[k] = _coerce(v, hints[k], key)
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def load_config(path: Optional[Union[str, Path]] = None, env: Optional[dict] = None) -> RunConfig:
    """Defaults, then the YAML file, then environment overrides."""
    tree = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(str(path))
        tree = yaml.safe_load(path.read_text()) or {}
    cfg = build(RunConfig, tree)
    env = os.environ if env is None else env
    if env.get(ENV_WORKSPACE):
        cfg.paths.workspace = env[ENV_WORKSPACE]
    if env.get(ENV_WORKERS):
        try:
            cfg.workers = int(env[ENV_WORKERS])
        except ValueError:
            raise ConfigError(f"{ENV_WORKERS} must be an integer") from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    try:
        cfg.experiment().validate()
        cfg.sweep()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def to_tree(cfg: RunConfig) -> dict:
    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                    if f.name not in DERIVED or obj is cfg}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, dict):
            return {k: plain(v) for k, v in obj.items()}
        return obj
    return plain(cfg)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_tree(cfg), sort_keys=False, default_flow_style=False)

"""End-to-end experiment: data, pretraining, crafting, mixed fine-tuning, evaluation.

Seeds: one global integer ``seed`` determines every stage through
``stage_seed(seed, name) = SeedSequence([seed, crc32(name)]).generate_state(1)[0]``
for the stage names in :data:`STAGES`.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Optional

import numpy as np

from .agent.model import AgentParams, ModelConfig, init_params
from .agent.training import TrainConfig, finetune
from .evaluation.report import EvalReport, evaluate
from .gui.dataset import Dataset, DatasetConfig, generate_dataset, poison_count
from .gui.targets import TargetTuple, attack_template, make_target_tuple
from .poison.craft import CraftResult, PoisonConfig, craft
from .triggers.compose import TriggerSpec

STAGES = ("data", "init", "pretrain", "clean", "target", "select", "craft", "poisoned", "eval")
SELECTIONS = ("target-label", "random")


def stage_seed(seed: int, stage: str) -> int:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    return int(np.random.SeedSequence([int(seed), zlib.crc32(stage.encode())]).generate_state(1)[0])


@dataclass
class ModelSettings:
    channels: tuple[int, int] = (8, 16)
    kernel: int = 3
    pool: tuple[int, int] = (2, 4)
    proj_dim: int = 64
    embed_dim: int = 64
    fusion_dim: int = 64


@dataclass
class EvalSettings:
    n_trigger: int = 100
    corruptions: tuple[str, ...] = ()


@dataclass
class ExperimentConfig:
    seed: int = 0
    attack_type: str = "I"
    selection: str = "target-label"
    data: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelSettings = field(default_factory=ModelSettings)
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    poison: PoisonConfig = field(default_factory=PoisonConfig)
    trigger: TriggerSpec = field(default_factory=lambda: TriggerSpec(kind="hoverball", size_fraction=0.001))
    eval: EvalSettings = field(default_factory=EvalSettings)

    def validate(self) -> None:
        attack_template(self.attack_type)
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        self.data.validate()
        self.pretrain.validate()
        self.train.validate()
        self.poison.validate()

    def to_dict(self) -> dict:
        return _plain(self)

    def hash(self) -> str:
        """Short digest of the effective configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, TriggerSpec):
        return obj.to_dict()
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def seeded(cfg: ExperimentConfig) -> ExperimentConfig:
    """Copy of ``cfg`` whose stage seeds are derived from ``cfg.seed``."""
    s = cfg.seed
    return replace(
        cfg,
        data=replace(cfg.data, seed=stage_seed(s, "data") % (2 ** 31)),
        pretrain=replace(cfg.pretrain, seed=stage_seed(s, "pretrain")),
        train=replace(cfg.train, seed=stage_seed(s, "clean")),
        poison=replace(cfg.poison, seed=stage_seed(s, "craft")),
    )


def model_config(cfg: ExperimentConfig, dataset: Dataset) -> ModelConfig:
    m = cfg.model
    return ModelConfig.from_schema(dataset.schema, image_size=cfg.data.image_size, channels=tuple(m.channels),
                                   kernel=m.kernel, pool=tuple(m.pool), proj_dim=m.proj_dim,
                                   embed_dim=m.embed_dim, fusion_dim=m.fusion_dim)


def arrays(samples, images: Optional[dict] = None):
    images = images or {}
    return (np.stack([images.get(s.sample_id, s.image) for s in samples]),
            [list(s.prompt) for s in samples], np.array([s.verb for s in samples]),
            np.array([s.argument for s in samples]), np.array([s.rationale for s in samples]))


def train_on(params0: AgentParams, samples, cfg: TrainConfig, images: Optional[dict] = None) -> AgentParams:
    return finetune(params0, *arrays(samples, images), cfg).params


def pretrain_model(cfg: ExperimentConfig, dataset: Dataset) -> AgentParams:
    """Randomly initialised agent trained on the pretraining split (the frozen crafting model)."""
    p0 = init_params(stage_seed(cfg.seed, "init"), model_config(cfg, dataset))
    return train_on(p0, dataset.pretrain, cfg.pretrain) if dataset.pretrain else p0


def select_poisons(cfg: ExperimentConfig, dataset: Dataset, target: TargetTuple) -> list[int]:
    """Indices of the P training samples to perturb.

    ``target-label`` takes samples already labelled with the target action first
    (in random order), then fills with random others; ``random`` samples uniformly.
    """
    p = poison_count(len(dataset.train), cfg.data.poison_ratio)
    rng = np.random.default_rng(stage_seed(cfg.seed, "select"))
    order = [int(i) for i in rng.permutation(len(dataset.train))]
    if cfg.selection == "random":
        return sorted(order[:p])
    match = [i for i in order if (dataset.train[i].verb, dataset.train[i].argument) == (target.verb, target.argument)]
    rest = [i for i in order if i not in set(match)]
    return sorted((match + rest)[:p])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dataset: Dataset
    pretrained: AgentParams
    clean: AgentParams
    poisoned: AgentParams
    target: TargetTuple
    crafted: CraftResult
    report: EvalReport


def run_experiment(cfg: ExperimentConfig, cache: Optional[dict] = None, hook=None) -> ExperimentResult:
    """Run every stage for one global seed. ``cache`` reuses data and reference models across calls."""
    cfg = seeded(cfg)
    cfg.validate()
    cache = {} if cache is None else cache
    # the poison ratio only affects selection, so reference models are shared across ratios
    key = json.dumps(_plain((cfg.seed, replace(cfg.data, poison_ratio=0.0), cfg.model, cfg.pretrain, cfg.train)),
                     sort_keys=True)
    if key not in cache:
        dataset = generate_dataset(cfg.data)
        pre = pretrain_model(cfg, dataset)
        clean = train_on(pre, dataset.train, cfg.train)
        cache[key] = (dataset, pre, clean)
    dataset, pre, clean = cache[key]
    target = make_target_tuple(cfg.attack_type, dataset, cfg.trigger, seed=stage_seed(cfg.seed, "target"))
    idx = select_poisons(cfg, dataset, target)
    crafted = craft(cfg.poison, pre, target, [dataset.train[i] for i in idx], hook=hook)
    images = {s.sample_id: s.image for s in crafted.samples}
    poisoned = train_on(pre, dataset.train, replace(cfg.train, seed=stage_seed(cfg.seed, "poisoned")), images)
    report = evaluate(poisoned, clean, dataset.test, target, cfg.trigger, seed=stage_seed(cfg.seed, "eval"),
                      n_trigger=cfg.eval.n_trigger, corruptions=cfg.eval.corruptions)
    report.meta = {"config_hash": cfg.hash(), "seed": cfg.seed}
    report.seeds.update({"global": cfg.seed})
    return ExperimentResult(cfg, dataset, pre, clean, poisoned, target, crafted, report)

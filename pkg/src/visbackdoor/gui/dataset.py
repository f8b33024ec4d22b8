"""Deterministic synthetic (screen, prompt, action, rationale) datasets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..agent.schema import NONE_ARG, ActionSchema
from .render import Widget, render_screen
from .templates import (
    APPS, BANNERS, CONTACTS, NOOP_PHRASES, PROMPT_KINDS, RATIONALE_BY_VERB, TEMPLATE_BY_NAME,
    TEMPLATES, default_schema,
)

SCHEMA_VERSION = 1
SPLIT_CODES = {"pretrain": 1, "train": 2, "test": 3}


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image: np.ndarray = field(repr=False, compare=False)
    prompt: tuple[int, ...]
    verb: int
    argument: int
    rationale: tuple[int, ...]
    template: str
    seed: int
    widgets: tuple[Widget, ...] = field(default=(), repr=False, compare=False)

    @property
    def action(self) -> tuple[int, int]:
        return (self.verb, self.argument)

    def with_image(self, image: np.ndarray) -> "Sample":
        """Copy with a replaced image; every text field is carried over untouched."""
        return replace(self, image=image)


@dataclass
class DatasetConfig:
    n_train: int = 500
    n_test: int = 200
    n_pretrain: int = 500
    poison_ratio: float = 0.2
    image_size: int = 64
    seed: int = 0
    prompt_weights: Optional[tuple] = None  # relative frequency of each prompt kind

    def validate(self) -> None:
        if self.n_train <= 0 or self.n_test <= 0 or self.n_pretrain < 0:
            raise ValueError("split sizes must be positive")
        if not 0.0 <= self.poison_ratio <= 1.0:
            raise ValueError("poison_ratio must lie in [0, 1]")
        if self.image_size < 16:
            raise ValueError("image_size must be at least 16")
        if self.prompt_weights is not None:
            w = np.asarray(self.prompt_weights, dtype=float)
            if w.shape != (len(PROMPT_KINDS),) or (w < 0).any() or w.sum() <= 0:
                raise ValueError(f"prompt_weights needs {len(PROMPT_KINDS)} non-negative entries")


def sample_seed(base_seed: int, split: str, index: int) -> int:
    """Seed of one sample; splits occupy disjoint ranges by construction."""
    if not 0 <= index < 2**24:
        raise ValueError("sample index out of range")
    return (int(base_seed) << 32) | (SPLIT_CODES[split] << 24) | index


def poison_count(n: int, ratio: float) -> int:
    # floor with a guard against 0.2 * 500 = 99.99999...
    return int(np.floor(n * ratio + 1e-9))


def banner_of(widgets) -> Optional[str]:
    for w in widgets:
        if w.role == "banner":
            return w.name
    return None


def screen_action(prompt: str, template, widgets) -> tuple[str, str]:
    """Ground-truth (verb, argument) for the screen-dependent prompt kinds."""
    banner = banner_of(widgets)
    if banner is not None:
        return BANNERS[banner]
    if prompt == PROMPT_KINDS[1]:
        return "tap", template.primary
    return "no_op", NONE_ARG


def make_sample(seed: int, split: str, index: int, schema: ActionSchema,
                size: int = 64, prompt_weights=None) -> Sample:
    rng = np.random.default_rng([seed, 7])
    template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
    image, widgets = render_screen(template, seed, (size, size))
    if prompt_weights is None:
        kind = int(rng.integers(len(PROMPT_KINDS)))
    else:
        w = np.asarray(prompt_weights, dtype=float)
        kind = int(rng.choice(len(PROMPT_KINDS), p=w / w.sum()))
    text = PROMPT_KINDS[kind]
    arg = NONE_ARG
    buttons = [w.name for w in widgets if w.role == "button"]
    if kind == 0:
        w = buttons[int(rng.integers(len(buttons)))]
        text, verb, arg = text.format(w=w), "tap", w
    elif kind in (1, 2):
        verb, arg = screen_action(text, template, widgets)
    elif kind == 3:
        verb, arg = "scroll", "down"
    elif kind == 4:
        verb = "get_current_time"
    elif kind == 5:
        c = CONTACTS[int(rng.integers(len(CONTACTS)))]
        text, verb, arg = text.format(contact=c), "call", c
    elif kind == 6:
        a = APPS[int(rng.integers(len(APPS)))]
        text, verb, arg = text.format(app=a), "open_app", a
    else:
        text, verb = NOOP_PHRASES[int(rng.integers(len(NOOP_PHRASES)))], "no_op"
    rationale = RATIONALE_BY_VERB[verb].format(app=template.short)
    return Sample(
        sample_id=f"{split}-{index:05d}",
        image=image,
        prompt=tuple(schema.encode_prompt(text)),
        verb=schema.verb_id(verb),
        argument=schema.argument_id(arg),
        rationale=tuple(schema.encode_rationale(rationale)),
        template=template.name,
        seed=seed,
        widgets=tuple(widgets),
    )


@dataclass
class Dataset:
    manifest: dict
    schema: ActionSchema
    splits: dict[str, list[Sample]]

    @property
    def train(self) -> list[Sample]:
        return self.splits["train"]

    @property
    def test(self) -> list[Sample]:
        return self.splits["test"]

    @property
    def pretrain(self) -> list[Sample]:
        return self.splits.get("pretrain", [])


def generate_dataset(config: Optional[DatasetConfig] = None,
                     schema: Optional[ActionSchema] = None) -> Dataset:
    config = config or DatasetConfig()
    config.validate()
    schema = schema or default_schema()
    sizes = {"pretrain": config.n_pretrain, "train": config.n_train, "test": config.n_test}
    splits = {}
    seeds = {}
    for split, n in sizes.items():
        seeds[split] = [sample_seed(config.seed, split, i) for i in range(n)]
        splits[split] = [make_sample(s, split, i, schema, config.image_size, config.prompt_weights)
                         for i, s in enumerate(seeds[split])]
    p = poison_count(config.n_train, config.poison_ratio)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n": config.n_train,
        "splits": sizes,
        "poison_count": p,
        "poison_ratio": config.poison_ratio,
        "effective_poison_ratio": p / config.n_train,
        "seed": config.seed,
        "image_size": config.image_size,
        "prompt_weights": None if config.prompt_weights is None else list(config.prompt_weights),
        "schema": schema.to_dict(),
    }
    return Dataset(manifest=manifest, schema=schema, splits=splits)


def config_from_manifest(manifest: dict) -> DatasetConfig:
    s = manifest["splits"]
    return DatasetConfig(
        n_train=s["train"], n_test=s["test"], n_pretrain=s["pretrain"],
        poison_ratio=manifest["poison_ratio"], image_size=manifest["image_size"],
        seed=manifest["seed"],
        prompt_weights=None if manifest.get("prompt_weights") is None else tuple(manifest["prompt_weights"]),
    )


def regenerate(manifest: dict) -> Dataset:
    """Rebuild every sample from a manifest alone."""
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {manifest.get('schema_version')}")
    return generate_dataset(config_from_manifest(manifest), ActionSchema.from_dict(manifest["schema"]))


def template_of(sample: Sample):
    return TEMPLATE_BY_NAME[sample.template]

"""Attack-type target tuples built on triggered test screens."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..agent.schema import ActionSchema, SchemaError
from ..triggers.compose import TriggerSpec, apply_trigger
from .dataset import Dataset, Sample, screen_action, template_of
from .templates import ATTACK_TYPES, PROMPT_KINDS


@dataclass(frozen=True)
class TargetTuple:
    """Attacker objective: triggered image, prompt and the desired output."""

    attack_type: str
    image: np.ndarray = field(repr=False, compare=False)
    prompt: tuple[int, ...]
    verb: int
    argument: int
    rationale: tuple[int, ...]
    base_id: str
    base_image: np.ndarray = field(repr=False, compare=False)
    trigger: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"attack_type": self.attack_type, "prompt": list(self.prompt), "verb": self.verb,
                "argument": self.argument, "rationale": list(self.rationale),
                "base_id": self.base_id, "trigger": self.trigger}


def attack_template(attack_type: str) -> tuple[str, str, str, str]:
    try:
        return ATTACK_TYPES[attack_type]
    except KeyError:
        raise ValueError(f"unknown attack type {attack_type!r}; expected one of {sorted(ATTACK_TYPES)}") from None


def clean_answer(prompt: str, sample: Sample) -> Optional[tuple[str, str]]:
    """Ground-truth action of ``sample``'s screen under ``prompt`` if the prompt is screen-resolved."""
    if prompt in PROMPT_KINDS[1:3]:
        return screen_action(prompt, template_of(sample), sample.widgets)
    return None


def eligible_screens(attack_type: str, samples: list[Sample]) -> list[int]:
    """Indices of screens whose clean answer under the attack prompt is not the target action."""
    prompt, verb, arg, _ = attack_template(attack_type)
    keep = []
    for i, s in enumerate(samples):
        ans = clean_answer(prompt, s)
        if ans is None or ans != (verb, arg):
            keep.append(i)
    return keep


def make_target_tuple(attack_type: str, dataset: Dataset, trigger: TriggerSpec,
                      seed: int = 0, schema: Optional[ActionSchema] = None) -> TargetTuple:
    """Sample a test screen, composite the trigger and attach the attack-type template."""
    schema = schema or dataset.schema
    prompt, verb, arg, rationale = attack_template(attack_type)
    try:
        ids = (tuple(schema.encode_prompt(prompt)), schema.verb_id(verb), schema.argument_id(arg),
               tuple(schema.encode_rationale(rationale)))
    except SchemaError as e:
        raise SchemaError(f"attack type {attack_type}: {e}") from None
    pool = eligible_screens(attack_type, dataset.test)
    if not pool:
        raise ValueError("no eligible base screen in the test split")
    rng = np.random.default_rng([int(seed), 0x7467])
    base = dataset.test[pool[int(rng.integers(len(pool)))]]
    image = apply_trigger(base.image, trigger, rng=rng, widgets=base.widgets)
    return TargetTuple(attack_type, image, ids[0], ids[1], ids[2], ids[3], base.sample_id,
                       base.image, trigger.to_dict())

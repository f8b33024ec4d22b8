"""Attack and clean-behaviour metrics for a fine-tuned agent."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..agent.model import AgentParams, predict
from ..gui.dataset import Sample
from ..gui.targets import TargetTuple, eligible_screens
from ..triggers.compose import TriggerSpec, apply_trigger
from ..triggers.metrics import psnr, ssim
from .corrupt import CORRUPTIONS, corrupt

REPORT_VERSION = 1


class ReportError(ValueError):
    """A report whose fields are mutually inconsistent."""


@dataclass
class EvalReport:
    """Percentages in [0, 100]. ``delta`` is always derived, never stored."""

    attack_type: str
    action_asr: float
    fsr: float
    o_fsr: float
    clean_trigger_asr: float
    context_asr: Optional[float] = None
    corruptions: dict = field(default_factory=dict)
    stealth: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return self.o_fsr - self.fsr

    def validate(self) -> None:
        rates = [self.action_asr, self.fsr, self.o_fsr, self.clean_trigger_asr]
        rates += [] if self.context_asr is None else [self.context_asr]
        for c in self.corruptions.values():
            rates += [c["action_asr"], c["fsr"]]
        if any(not 0.0 <= r <= 100.0 for r in rates):
            raise ReportError("rates must lie in [0, 100]")
        if self.counts and not 0 < self.counts.get("asr", 1) <= self.counts.get("test", 1):
            raise ReportError("trigger-set size must be positive and within the test-set size")

    def to_dict(self) -> dict:
        self.validate()
        d = {
            "report_version": REPORT_VERSION,
            "attack_type": self.attack_type,
            "action_asr": self.action_asr,
            "context_asr": self.context_asr,
            "fsr": self.fsr,
            "o_fsr": self.o_fsr,
            "delta": self.delta,
            "clean_trigger_asr": self.clean_trigger_asr,
            "corruptions": self.corruptions,
            "stealth": self.stealth,
            "counts": self.counts,
            "seeds": self.seeds,
            "meta": self.meta,
        }
        if d["delta"] != d["o_fsr"] - d["fsr"]:
            raise ReportError("delta must equal o_fsr - fsr")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rep = cls(d["attack_type"], d["action_asr"], d["fsr"], d["o_fsr"], d["clean_trigger_asr"],
                  d.get("context_asr"), d.get("corruptions", {}), d.get("stealth", {}),
                  d.get("counts", {}), d.get("seeds", {}), d.get("meta", {}))
        if "delta" in d and d["delta"] != rep.delta:
            raise ReportError("stored delta disagrees with o_fsr - fsr")
        return rep


def _pct(hits: np.ndarray) -> float:
    return float(100.0 * np.mean(hits)) if len(hits) else 0.0


def triggered_images(samples: Sequence[Sample], trigger: TriggerSpec, seed: int) -> np.ndarray:
    """Trigger composited on copies; each screen has its own generator derived from ``seed``."""
    return np.stack([apply_trigger(s.image, trigger, rng=np.random.default_rng([int(seed), 0x74, k]),
                                   widgets=s.widgets) for k, s in enumerate(samples)])


def corrupted(images: np.ndarray, kind: str, seed: int) -> np.ndarray:
    return np.stack([corrupt(img, kind, rng=np.random.default_rng([int(seed), 0x63, k]))
                     for k, img in enumerate(images)])


def attack_hits(params: AgentParams, images: np.ndarray, target: TargetTuple) -> tuple[np.ndarray, np.ndarray]:
    out = predict(params, images, [list(target.prompt)] * len(images))
    action = np.array([(o.verb, o.argument) == (target.verb, target.argument) for o in out])
    context = np.array([o.rationale == tuple(target.rationale) for o in out]) & action
    return action, context


def follow_hits(params: AgentParams, samples: Sequence[Sample], images: Optional[np.ndarray] = None) -> np.ndarray:
    images = np.stack([s.image for s in samples]) if images is None else images
    out = predict(params, images, [list(s.prompt) for s in samples])
    return np.array([(o.verb, o.argument) == (s.verb, s.argument) for o, s in zip(out, samples)])


def _base_shapes(params: AgentParams) -> dict:
    return {k: v for k, v in params.config.shapes().items() if ".lora_" not in k}


def evaluate(params: AgentParams, clean_params: AgentParams, test: Sequence[Sample], target: TargetTuple,
             trigger: TriggerSpec, seed: int = 0, n_trigger: int = 100,
             corruptions: Sequence[str] = ()) -> EvalReport:
    """Action/Context-ASR on triggered eligible screens, FSR / O-FSR on the clean test split."""
    if len(test) == 0:
        raise ValueError("empty test set")
    if _base_shapes(params) != _base_shapes(clean_params):
        raise ValueError("parameter sets do not share one configuration")
    for kind in corruptions:
        if kind not in CORRUPTIONS:
            raise ValueError(f"unknown corruption {kind!r}")
    chosen = [test[i] for i in eligible_screens(target.attack_type, list(test))][:n_trigger]
    if not chosen:
        raise ValueError("no eligible screens for the attack prompt")
    trig = triggered_images(chosen, trigger, seed)
    action, context = attack_hits(params, trig, target)
    clean_action, _ = attack_hits(clean_params, trig, target)
    follow = follow_hits(params, test)
    o_follow = follow_hits(clean_params, test)
    clean_imgs = np.stack([s.image for s in test])

    per = {}
    for kind in corruptions:
        c_action, c_context = attack_hits(params, corrupted(trig, kind, seed), target)
        c_follow = follow_hits(params, test, corrupted(clean_imgs, kind, seed + 1))
        per[kind] = {"action_asr": _pct(c_action), "fsr": _pct(c_follow)}
        if target.attack_type == "IV":
            per[kind]["context_asr"] = _pct(c_context)

    base = np.stack([s.image for s in chosen])
    stealth = {"psnr": float(np.mean([psnr(a, b) for a, b in zip(trig, base)])),
               "ssim": float(np.mean([ssim(a, b) for a, b in zip(trig, base)]))}
    return EvalReport(
        attack_type=target.attack_type,
        action_asr=_pct(action),
        context_asr=_pct(context) if target.attack_type == "IV" else None,
        fsr=_pct(follow),
        o_fsr=_pct(o_follow),
        clean_trigger_asr=_pct(clean_action),
        corruptions=per,
        stealth=stealth,
        counts={"asr": len(chosen), "test": len(test)},
        seeds={"eval": int(seed)},
    )

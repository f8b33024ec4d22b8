"""Gradient-aligned crafting of bounded image perturbations over a frozen agent."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import autodiff as ad
from ..agent.model import AgentParams, forward, loss, param_tensors, parameter_gradient
from ..gui.dataset import Sample
from ..gui.targets import TargetTuple
from .augment import AugmentDraw, apply_draws
from .optim import SignedAdamState, project, signed_adam_step

Hook = Callable[[int, int, np.ndarray, np.ndarray], None]


class CraftError(RuntimeError):
    """Crafting could not produce a perturbation set."""


@dataclass
class PoisonConfig:
    eps: float = 8 / 255
    steps: int = 5  # M
    restarts: int = 20  # R
    lr: float = 0.01
    batch_size: int = 10
    augment: bool = True
    flip: bool = True
    translate: bool = True
    crop: bool = True
    quantize: bool = True  # snap poisoned pixels to the 8-bit grid so PNG storage is lossless
    seed: int = 0

    def validate(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be at least 1")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr and batch_size must be positive")


@dataclass
class PoisonBatch:
    """Arrays describing the poison samples: clean images and untouched labels."""

    images: np.ndarray
    prompts: list[list[int]]
    verbs: np.ndarray
    arguments: np.ndarray
    rationales: np.ndarray

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "PoisonBatch":
        return cls(np.stack([s.image for s in samples]).astype(np.float64),
                   [list(s.prompt) for s in samples],
                   np.array([s.verb for s in samples]), np.array([s.argument for s in samples]),
                   np.array([s.rationale for s in samples]))

    def __len__(self) -> int:
        return len(self.images)

    def take(self, idx) -> tuple:
        return ([self.prompts[i] for i in idx], self.verbs[idx], self.arguments[idx], self.rationales[idx])


@dataclass
class CraftResult:
    samples: list[Sample]
    deltas: np.ndarray
    report: dict = field(default_factory=dict)


def target_gradient(params: AgentParams, target: TargetTuple, names: Sequence[str]) -> np.ndarray:
    """Parameter gradient of the task loss on the (unaugmented) triggered target."""
    return parameter_gradient(params, target.image[None], [list(target.prompt)], [target.verb],
                              [target.argument], [list(target.rationale)], names)


def poison_gradient(params: AgentParams, batch: PoisonBatch, images: np.ndarray, names: Sequence[str],
                    batch_size: int, order: Optional[np.ndarray] = None) -> np.ndarray:
    """Mean parameter gradient over all poisons, accumulated over mini-batches."""
    n = len(batch)
    order = np.arange(n) if order is None else order
    total = None
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        g = parameter_gradient(params, images[idx], *batch.take(idx), names=names) * (len(idx) / n)
        total = g if total is None else total + g
    return total


def alignment_loss(params: AgentParams, target: TargetTuple, batch: PoisonBatch,
                   images: Optional[np.ndarray] = None, names: Optional[Sequence[str]] = None,
                   batch_size: int = 10, target_grad: Optional[np.ndarray] = None) -> float:
    """``1 - cos(grad of target loss, mean poison gradient)`` for poisoned ``images``."""
    names = tuple(params.trainable_names() if names is None else names)
    tg = target_gradient(params, target, names) if target_grad is None else target_grad
    pg = poison_gradient(params, batch, batch.images if images is None else images, names, batch_size)
    return ad.cosine_alignment(tg, pg)


def alignment_grad(params: AgentParams, batch: PoisonBatch, delta: np.ndarray, target_grad: np.ndarray,
                   names: Sequence[str], batch_size: int, order: np.ndarray,
                   draws: Optional[list[AugmentDraw]] = None) -> tuple[float, np.ndarray]:
    """Alignment loss and its exact derivative with respect to every ``delta``.

    Two passes keep memory at one mini-batch: the first accumulates the mean
    poison gradient G without a graph; the cosine adjoint v = dL/dG then seeds,
    batch by batch, a recorded backward pass whose pullback gives dL/d(delta).
    """
    n = len(batch)
    images = batch.images + delta
    if draws is not None:
        images = apply_draws(images, draws)
    G = poison_gradient(params, batch, images, names, batch_size, order)
    value, adj = ad.cosine_alignment_and_adjoint(target_grad, G)
    out = np.zeros_like(delta)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        d = ad.Tensor(delta[idx], requires_grad=True)
        x = ad.Tensor(batch.images[idx]) + d
        if draws is not None:
            x = apply_draws(x, [draws[i] for i in idx])
        prompts, verbs, args, rats = batch.take(idx)
        t = param_tensors(params, names)
        value_b = loss(forward(params, x, prompts, t), verbs, args, rats)
        pgrads = ad.grad(value_b, [t[k] for k in names], create_graph=True)
        out[idx] = ad.pullback(pgrads, adj * (len(idx) / n), [d])[0]
    return value, out


def quantize(base: np.ndarray, delta: np.ndarray, eps: float) -> np.ndarray:
    """Poisoned image with every pixel on the 1/255 grid and within ``eps`` of ``base`` (in 8-bit steps)."""
    k = np.round(base * 255.0)
    q = np.round(delta * 255.0)
    cap = np.floor(eps * 255.0 + 1e-9)
    q = np.clip(np.clip(q, -cap, cap), -k, 255.0 - k)
    out = (k + q) / 255.0
    # a full-budget step can exceed eps by an ulp after division; back those off by one level
    over = np.abs(out - base) > eps
    q[over] -= np.sign(q[over])
    return (k + q) / 255.0


def craft(config: PoisonConfig, params: AgentParams, target: TargetTuple, base_samples: Sequence[Sample],
          names: Optional[Sequence[str]] = None, hook: Optional[Hook] = None) -> CraftResult:
    """Craft perturbations for ``base_samples``; text fields are carried over untouched."""
    config.validate()
    if len(base_samples) == 0:
        raise CraftError("no base samples to poison (P = 0)")
    names = tuple(params.trainable_names() if names is None else names)
    fingerprint = params.tobytes()
    t0 = time.perf_counter()
    batch = PoisonBatch.from_samples(base_samples)
    n, size = len(batch), batch.images.shape[1]
    tg = target_gradient(params, target, names)
    ad.alignment._norms(tg, tg)  # degenerate target gradient fails fast

    runs = []
    best: Optional[tuple[float, int, np.ndarray]] = None
    for r in range(config.restarts):
        rng = np.random.default_rng([int(config.seed), r])
        run = {"index": r, "initial_loss": None, "step_losses": [], "final_loss": None,
               "aborted": False, "error": None}
        try:
            delta = project(rng.uniform(-config.eps, config.eps, size=batch.images.shape),
                            batch.images, config.eps)
            run["initial_loss"] = alignment_loss(params, target, batch, batch.images + delta, names,
                                                 config.batch_size, tg)
            state = SignedAdamState.zeros_like(delta)
            for s in range(1, config.steps + 1):
                order = rng.permutation(n)
                draws = None
                if config.augment:
                    draws = [AugmentDraw.sample(rng, size, flip=config.flip, translate=config.translate,
                                                crop=config.crop) for _ in range(n)]
                value, g = alignment_grad(params, batch, delta, tg, names, config.batch_size, order, draws)
                if not np.isfinite(value) or not np.all(np.isfinite(g)):
                    raise FloatingPointError(f"non-finite alignment loss at step {s}")
                run["step_losses"].append(value)
                delta = project(delta + signed_adam_step(state, g, config.lr), batch.images, config.eps)
                if hook is not None:
                    hook(r, s, delta, batch.images)
            poisoned = quantize(batch.images, delta, config.eps) if config.quantize else batch.images + delta
            final = alignment_loss(params, target, batch, poisoned, names, config.batch_size, tg)
            if not np.isfinite(final):
                raise FloatingPointError("non-finite final alignment loss")
            run["final_loss"] = final
            run["progress"] = bool(final <= run["initial_loss"])
            if best is None or final < best[0]:
                best = (final, r, poisoned)
        except (FloatingPointError, ad.DegenerateGradientError) as e:
            run["aborted"] = True
            run["error"] = str(e)
        runs.append(run)

    if params.tobytes() != fingerprint:
        raise CraftError("model parameters changed during crafting")
    if best is None:
        raise CraftError("every restart aborted")
    final, selected, poisoned = best
    delta = poisoned - batch.images
    samples = [s.with_image(img) for s, img in zip(base_samples, poisoned)]
    report = {
        "restarts": runs,
        "selected": selected,
        "selected_loss": final,
        "delta_max": float(np.max(np.abs(delta))),
        "delta_mean": float(np.mean(np.abs(delta))),
        "n_poison": n,
        "target": target.to_dict(),
        "poison_ids": [s.sample_id for s in base_samples],
        "config": asdict(config),
        "parameters": list(names),
        "progress_failures": sum(1 for run in runs if run.get("progress") is False),
        "wall_time": time.perf_counter() - t0,
    }
    return CraftResult(samples, delta, report)

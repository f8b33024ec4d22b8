"""Mini-batch Adam fine-tuning of agent parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import autodiff as ad
from .model import AgentParams, forward, loss, param_tensors


class TrainingError(RuntimeError):
    """Training produced a non-finite loss; ``trace`` holds the losses so far."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    optimizer: str = "adam"
    adapters: bool = False
    adapter_rank: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("lr and batch_size must be positive, epochs non-negative")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}; only plain Adam is provided")
        if self.adapters and self.adapter_rank <= 0:
            raise ValueError("adapter_rank must be positive when adapters are on")


@dataclass
class TrainResult:
    params: AgentParams
    trace: list[float] = field(default_factory=list)  # mean loss per epoch


class Adam:
    """Plain Adam (no weight decay) over a dict of arrays."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            params[name] = params[name] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def finetune(params0: AgentParams, images: np.ndarray, prompts: Sequence[Sequence[int]],
             verbs, arguments, rationales, cfg: Optional[TrainConfig] = None) -> TrainResult:
    """Epoch-shuffled mini-batch Adam on the task loss; deterministic given ``cfg.seed``.

    With ``cfg.adapters`` the base weights stay fixed and only fresh low-rank
    adapters are trained (added first if ``params0`` has none).
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    n = len(images)
    if n == 0:
        raise ValueError("cannot fine-tune on an empty dataset")
    images = np.asarray(images, dtype=np.float64)
    verbs, arguments, rationales = np.asarray(verbs), np.asarray(arguments), np.asarray(rationales)
    params = params0
    if cfg.adapters and not params.config.adapter_rank:
        params = params.with_adapters(cfg.adapter_rank, cfg.seed)
    names = params.trainable_names()
    current = params.as_dict()
    opt = Adam(cfg.lr)
    rng = np.random.default_rng([int(cfg.seed), 0x7472])
    trace: list[float] = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            snapshot = AgentParams(params.config, tuple(current[k] for k in params.names))
            t = param_tensors(snapshot, names)
            value = loss(forward(snapshot, images[idx], [prompts[i] for i in idx], t),
                         verbs[idx], arguments[idx], rationales[idx])
            if not np.isfinite(value.item()):
                raise TrainingError("non-finite training loss", trace + [value.item()])
            grads = ad.grad(value, [t[k] for k in names])
            opt.step(current, {k: g.data for k, g in zip(names, grads)})
            total += value.item() * len(idx)
        trace.append(total / n)
    return TrainResult(AgentParams(params.config, tuple(current[k] for k in params.names)), trace)

"""scikit-learn style wrappers around the agent and the poison crafter.

Inputs are sequences of :class:`~visbackdoor.gui.dataset.Sample`; labels live
inside the samples, so ``y`` is accepted and ignored.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .agent.model import AgentParams, ModelConfig, init_params, predict
from .agent.training import TrainConfig, finetune
from .gui.dataset import Sample
from .gui.targets import TargetTuple
from .gui.templates import default_schema
from .poison.craft import PoisonConfig, craft


def _arrays(samples: Sequence[Sample]):
    if len(samples) == 0:
        raise ValueError("no samples")
    return (np.stack([s.image for s in samples]), [list(s.prompt) for s in samples],
            np.array([s.verb for s in samples]), np.array([s.argument for s in samples]),
            np.array([s.rationale for s in samples]))


class AgentEstimator(BaseEstimator):
    """Fine-tunes the toy agent and scores it by follow rate.

    ``init`` is either a starting :class:`AgentParams` or ``None`` for a
    seeded random initialisation of the default model configuration.
    """

    def __init__(self, init: Optional[AgentParams] = None, lr: float = 1e-3, batch_size: int = 16,
                 epochs: int = 30, adapters: bool = False, adapter_rank: int = 4, seed: int = 0):
        self.init = init
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.adapters = adapters
        self.adapter_rank = adapter_rank
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, adapters=self.adapters,
                           adapter_rank=self.adapter_rank, seed=self.seed)

    def fit(self, X: Sequence[Sample], y=None):
        cfg = self._train_config()
        cfg.validate()
        arrays = _arrays(X)
        p0 = self.init
        if p0 is None:
            p0 = init_params(self.seed, ModelConfig.from_schema(default_schema(), image_size=arrays[0].shape[1]))
        result = finetune(p0, *arrays, cfg)
        self.params_ = result.params
        self.loss_trace_ = list(result.trace)
        return self

    def predict(self, X: Sequence[Sample]) -> np.ndarray:
        """``(n, 2)`` array of predicted (verb id, argument id)."""
        check_is_fitted(self, "params_")
        out = predict(self.params_, np.stack([s.image for s in X]), [list(s.prompt) for s in X])
        return np.array([(o.verb, o.argument) for o in out], dtype=np.int64).reshape(-1, 2)

    def score(self, X: Sequence[Sample], y=None) -> float:
        """Fraction of samples whose predicted action equals the stored one."""
        pred = self.predict(X)
        truth = np.array([(s.verb, s.argument) for s in X]).reshape(-1, 2)
        return float(np.mean(np.all(pred == truth, axis=1)))


class PoisonCrafter(TransformerMixin, BaseEstimator):
    """Crafts bounded image perturbations on ``X`` against a frozen model and target.

    ``transform`` returns the samples with crafted images swapped in; every
    text field is carried over untouched.
    """

    def __init__(self, params: Optional[AgentParams] = None, target: Optional[TargetTuple] = None,
                 eps: float = 8 / 255, steps: int = 5, restarts: int = 20, lr: float = 0.01,
                 batch_size: int = 10, augment: bool = True, quantize: bool = True, seed: int = 0):
        self.params = params
        self.target = target
        self.eps = eps
        self.steps = steps
        self.restarts = restarts
        self.lr = lr
        self.batch_size = batch_size
        self.augment = augment
        self.quantize = quantize
        self.seed = seed

    def _config(self) -> PoisonConfig:
        return PoisonConfig(eps=self.eps, steps=self.steps, restarts=self.restarts, lr=self.lr,
                            batch_size=self.batch_size, augment=self.augment, quantize=self.quantize,
                            seed=self.seed)

    def fit(self, X: Sequence[Sample], y=None):
        if self.params is None or self.target is None:
            raise ValueError("PoisonCrafter needs params and target")
        result = craft(self._config(), self.params, self.target, list(X))
        self.result_ = result
        self.images_ = {s.sample_id: s.image for s in result.samples}
        self.report_ = result.report
        return self

    def transform(self, X: Sequence[Sample]) -> list[Sample]:
        check_is_fitted(self, "images_")
        return [s.with_image(self.images_[s.sample_id]) if s.sample_id in self.images_ else s for s in X]

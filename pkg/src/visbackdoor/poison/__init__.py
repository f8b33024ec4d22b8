"""Crafting clean-label poisons by gradient alignment."""

from .augment import AugmentDraw, apply_draws, augment
from .craft import (
    CraftError, CraftResult, PoisonBatch, PoisonConfig, alignment_grad, alignment_loss, craft,
    poison_gradient, quantize, target_gradient,
)
from .optim import ConstraintCheck, SignedAdamState, project, signed_adam_step

__all__ = [
    "AugmentDraw", "ConstraintCheck", "CraftError", "CraftResult", "PoisonBatch", "PoisonConfig",
    "SignedAdamState", "alignment_grad", "alignment_loss", "apply_draws", "augment", "craft",
    "poison_gradient", "project", "quantize", "signed_adam_step", "target_gradient",
]

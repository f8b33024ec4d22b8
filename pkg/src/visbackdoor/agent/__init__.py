"""Toy vision-language mobile agent: action schema, model, training and checkpoints."""

from .checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .model import (
    AgentParams, Logits, ModelConfig, decode, encode_prompts, forward, init_params, loss, parameter_gradient,
    predict, sample_losses,
)
from .schema import NONE_ARG, PAD, ActionSchema, AgentOutput, SchemaError, tokenize
from .training import Adam, TrainConfig, TrainingError, TrainResult, finetune

__all__ = [
    "NONE_ARG", "PAD", "ActionSchema", "Adam", "AgentOutput", "AgentParams", "CheckpointError", "Logits",
    "ModelConfig", "SchemaError", "TrainConfig", "TrainResult", "TrainingError", "decode", "decode_checkpoint",
    "encode_checkpoint", "encode_prompts", "finetune", "forward", "init_params", "load_checkpoint", "loss",
    "parameter_gradient", "predict", "sample_losses", "save_checkpoint", "tokenize",
]

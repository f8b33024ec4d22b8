"""Synthetic mobile screens, prompt/action datasets, attack targets and dataset files."""

from .dataset import Dataset, DatasetConfig, Sample, generate_dataset, make_sample, poison_count, regenerate
from .io import DatasetDiff, diff_datasets, read_dataset, read_png, write_dataset, write_png, write_poisoned_dataset
from .render import Widget, render_screen, widget_mask
from .targets import TargetTuple, attack_template, clean_answer, eligible_screens, make_target_tuple
from .templates import ATTACK_TYPES, PROMPT_KINDS, TEMPLATES, default_schema

__all__ = [
    "ATTACK_TYPES", "PROMPT_KINDS", "TEMPLATES", "Dataset", "DatasetConfig", "DatasetDiff", "Sample",
    "TargetTuple", "Widget", "attack_template", "clean_answer", "default_schema", "diff_datasets",
    "eligible_screens", "generate_dataset", "make_sample", "make_target_tuple", "poison_count", "read_dataset",
    "read_png", "regenerate", "render_screen", "widget_mask", "write_dataset", "write_png",
    "write_poisoned_dataset",
]

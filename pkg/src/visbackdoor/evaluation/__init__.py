"""Metrics, corruptions, reports and ablation sweeps for fine-tuned agents."""

from .ablation import (
    DIMENSIONS, EPS_GRID, POSITION_GRID, SIZE_GRID, Cell, CellResult, ablate, apply_cell, cells_from_sweep,
    run_cell, table_csv, table_json,
)
from .corrupt import CORRUPTIONS, corrupt, crop20, resize80, resize_bilinear
from .jpeg import decode as jpeg_decode
from .jpeg import encode as jpeg_encode
from .jpeg import jpeg_roundtrip
from .report import EvalReport, ReportError, attack_hits, evaluate, follow_hits, triggered_images

__all__ = [
    "CORRUPTIONS", "DIMENSIONS", "EPS_GRID", "POSITION_GRID", "SIZE_GRID", "Cell", "CellResult", "EvalReport",
    "ReportError", "ablate", "apply_cell", "attack_hits", "cells_from_sweep", "corrupt", "crop20", "evaluate",
    "follow_hits", "jpeg_decode", "jpeg_encode", "jpeg_roundtrip", "resize80", "resize_bilinear", "run_cell",
    "table_csv", "table_json", "triggered_images",
]

"""One-at-a-time ablation sweeps around a base experiment.

Each cell changes a single dimension of the base configuration, runs the whole
pipeline for every seed and keeps per-seed medians.  A failing cell is marked
and the sweep carries on.
"""

from __future__ import annotations

import csv
import io
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..triggers.compose import TriggerSpec

DIMENSIONS = ("kind", "poison_ratio", "eps", "position", "size")
EPS_GRID = (4 / 255, 8 / 255, 12 / 255, 16 / 255)
POSITION_GRID = ("top-left", "center", "button", "background")
SIZE_GRID = (0.0005, 0.001, 0.005, 0.01)
METRICS = ("action_asr", "context_asr", "fsr", "o_fsr", "delta", "clean_trigger_asr")
CSV_COLUMNS = ("dimension", "value", "status") + METRICS + ("seeds", "error")


@dataclass
class Cell:
    dimension: str
    value: object

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown ablation dimension {self.dimension!r}; expected one of {DIMENSIONS}")


def cells_from_sweep(sweep: dict) -> list[Cell]:
    """``{"eps": [4/255, 8/255], "position": [...]}`` -> one cell per listed value."""
    return [Cell(dim, v) for dim, values in sweep.items() for v in values]


def apply_cell(cfg, cell: Cell):
    """Copy of an experiment configuration with one dimension overridden."""
    t = cfg.trigger
    if cell.dimension == "eps":
        return replace(cfg, poison=replace(cfg.poison, eps=float(cell.value)))
    if cell.dimension == "poison_ratio":
        return replace(cfg, data=replace(cfg.data, poison_ratio=float(cell.value)))
    if cell.dimension == "kind":
        return replace(cfg, trigger=TriggerSpec(kind=str(cell.value)))
    if cell.dimension == "position":
        return replace(cfg, trigger=replace(t, position=cell.value))
    return replace(cfg, trigger=replace(t, size_fraction=float(cell.value)))


def _median(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else None


@dataclass
class CellResult:
    cell: Cell
    seeds: list[int]
    status: str = "ok"
    medians: dict = field(default_factory=dict)
    per_seed: list[dict] = field(default_factory=list)
    error: str = ""

    def row(self) -> dict:
        out = {"dimension": self.cell.dimension, "value": self.cell.value, "status": self.status,
               "seeds": list(self.seeds), "error": self.error}
        out.update({m: self.medians.get(m) for m in METRICS})
        return out


def run_cell(base_cfg, cell: Cell, seeds: Sequence[int], cache: Optional[dict] = None,
             runner: Optional[Callable] = None) -> CellResult:
    """Run one cell for every seed; the per-seed delta is always ``o_fsr - fsr``."""
    if runner is None:
        from ..pipeline import run_experiment as runner
    res = CellResult(cell, [int(s) for s in seeds])
    try:
        cfg = apply_cell(base_cfg, cell)
        for s in seeds:
            rep = runner(replace(cfg, seed=int(s)), cache=cache).report
            d = rep.to_dict()
            res.per_seed.append({m: d[m] for m in METRICS})
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        res.status = "failed"
        res.error = f"{type(exc).__name__}: {exc}"
        res.per_seed.append({"traceback": traceback.format_exc()})
        return res
    res.medians = {m: _median([p[m] for p in res.per_seed]) for m in METRICS}
    return res


def _run_cell_job(args):
    return run_cell(*args)


def ablate(base_cfg, sweep: dict, seeds: Sequence[int] = (0, 1, 2), workers: int = 1,
           runner: Optional[Callable] = None) -> list[CellResult]:
    """Run every cell of ``sweep``; cells run in ``workers`` processes when above one."""
    cells = cells_from_sweep(sweep)
    if workers <= 1 or len(cells) <= 1:
        cache: dict = {}
        return [run_cell(base_cfg, c, seeds, cache, runner) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_job, [(base_cfg, c, seeds, None, runner) for c in cells]))


def table_csv(results: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        row = r.row()
        row["seeds"] = " ".join(str(s) for s in row["seeds"])
        row.update({m: "" if row[m] is None else f"{row[m]:.4f}" for m in METRICS})
        writer.writerow(row)
    return buf.getvalue()


def table_json(results: Sequence[CellResult], meta: Optional[dict] = None) -> str:
    payload = {"meta": meta or {}, "cells": [dict(r.row(), per_seed=[
        {k: v for k, v in p.items() if k != "traceback"} for p in r.per_seed]) for r in results]}
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"

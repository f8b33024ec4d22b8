"""On-disk dataset layout: ``manifest.json``, ``samples.jsonl`` and ``images/*.png``.

Each ``samples.jsonl`` line is one sample record with sorted keys::

    {"action": {"argument": int, "verb": int}, "image": "images/<id>.png",
     "prompt": [int, ...], "rationale": [int, ...], "sample_id": str, "seed": int,
     "split": str, "template": str, "widgets": [...]}

A poisoned copy of a dataset keeps every record byte-identical and only
rewrites the PNG files of the poisoned samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from PIL import Image

from ..agent.schema import ActionSchema
from .dataset import SCHEMA_VERSION, Dataset, Sample
from .render import Widget

PathLike = Union[str, Path]
MANIFEST = "manifest.json"
SAMPLES = "samples.jsonl"


def to_uint8(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.min(initial=0.0) < 0.0 or img.max(initial=1.0) > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return np.round(img * 255.0).astype(np.uint8)


def write_png(path: PathLike, image: np.ndarray) -> None:
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def read_png(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def dump_json(obj, path: PathLike) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def sample_record(sample: Sample, split: str) -> dict:
    return {
        "sample_id": sample.sample_id,
        "split": split,
        "seed": int(sample.seed),
        "template": sample.template,
        "prompt": [int(t) for t in sample.prompt],
        "action": {"verb": int(sample.verb), "argument": int(sample.argument)},
        "rationale": [int(t) for t in sample.rationale],
        "image": f"images/{sample.sample_id}.png",
        "widgets": [w.to_dict() for w in sample.widgets],
    }


def record_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _widget(d: dict) -> Widget:
    return Widget(d["role"], d["name"], tuple(d["bbox"]), tuple(c / 255.0 for c in d["color"]))


def write_dataset(dataset: Dataset, root: PathLike, images: Optional[dict[str, np.ndarray]] = None) -> Path:
    """Write every split; ``images`` optionally overrides pixels by sample id."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    images = images or {}
    lines = []
    for split in ("pretrain", "train", "test"):
        for s in dataset.splits.get(split, []):
            rec = sample_record(s, split)
            write_png(root / rec["image"], images.get(s.sample_id, s.image))
            lines.append(record_line(rec))
    (root / SAMPLES).write_text("\n".join(lines) + "\n")
    dump_json(dataset.manifest, root / MANIFEST)
    return root


def read_dataset(root: PathLike) -> Dataset:
    root = Path(root)
    for name in (MANIFEST, SAMPLES):
        if not (root / name).exists():
            raise FileNotFoundError(str(root / name))
    manifest = json.loads((root / MANIFEST).read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {manifest.get('schema_version')}")
    schema = ActionSchema.from_dict(manifest["schema"])
    splits: dict[str, list[Sample]] = {"pretrain": [], "train": [], "test": []}
    for line in (root / SAMPLES).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        splits[rec["split"]].append(Sample(
            sample_id=rec["sample_id"], image=read_png(root / rec["image"]),
            prompt=tuple(rec["prompt"]), verb=rec["action"]["verb"], argument=rec["action"]["argument"],
            rationale=tuple(rec["rationale"]), template=rec["template"], seed=rec["seed"],
            widgets=tuple(_widget(w) for w in rec["widgets"])))
    return Dataset(manifest=manifest, schema=schema, splits=splits)


@dataclass
class DatasetDiff:
    """Outcome of comparing a clean dataset directory against a poisoned copy."""

    changed_images: list[str] = field(default_factory=list)
    text_differences: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    manifest_equal: bool = True

    @property
    def clean_text(self) -> bool:
        return self.manifest_equal and not self.text_differences and not self.missing

    def to_dict(self) -> dict:
        return {"changed_images": self.changed_images, "text_differences": self.text_differences,
                "missing": self.missing, "manifest_equal": self.manifest_equal,
                "clean_text": self.clean_text}


def diff_datasets(clean_root: PathLike, poisoned_root: PathLike) -> DatasetDiff:
    """Compare two dataset directories record by record and image by image."""
    clean_root, poisoned_root = Path(clean_root), Path(poisoned_root)
    out = DatasetDiff()
    out.manifest_equal = (clean_root / MANIFEST).read_bytes() == (poisoned_root / MANIFEST).read_bytes()
    a = (clean_root / SAMPLES).read_bytes().splitlines()
    b = (poisoned_root / SAMPLES).read_bytes().splitlines()
    if len(a) != len(b):
        out.text_differences.append(f"record count {len(a)} != {len(b)}")
    for k, (la, lb) in enumerate(zip(a, b)):
        rec = json.loads(la)
        if la != lb:
            out.text_differences.append(rec["sample_id"])
            continue
        pa, pb = clean_root / rec["image"], poisoned_root / rec["image"]
        if not pb.exists():
            out.missing.append(rec["sample_id"])
        elif pa.read_bytes() != pb.read_bytes():
            out.changed_images.append(rec["sample_id"])
    return out


def write_poisoned_dataset(clean_root: PathLike, out_root: PathLike, poisoned: Iterable[Sample]) -> Path:
    """Copy a dataset directory, replacing the images of ``poisoned`` samples only."""
    clean_root, out_root = Path(clean_root), Path(out_root)
    (out_root / "images").mkdir(parents=True, exist_ok=True)
    replace = {s.sample_id: s for s in poisoned}
    lines = (clean_root / SAMPLES).read_bytes()
    for line in lines.splitlines():
        rec = json.loads(line)
        src = clean_root / rec["image"]
        dst = out_root / rec["image"]
        if rec["sample_id"] in replace:
            s = replace.pop(rec["sample_id"])
            if tuple(rec["prompt"]) != tuple(s.prompt) or rec["action"] != {"verb": s.verb, "argument": s.argument} \
                    or tuple(rec["rationale"]) != tuple(s.rationale):
                raise ValueError(f"poisoned sample {s.sample_id} changes text fields")
            write_png(dst, s.image)
        else:
            dst.write_bytes(src.read_bytes())
    if replace:
        raise KeyError(f"poisoned samples not in dataset: {sorted(replace)[:5]}")
    (out_root / SAMPLES).write_bytes(lines)
    (out_root / MANIFEST).write_bytes((clean_root / MANIFEST).read_bytes())
    return out_root

"""Command-line driver.

Stages and the artifacts they write under the workspace::

    synth                 dataset/ (manifest.json, samples.jsonl, images/)
    train --pretrain      checkpoints/pretrained.ckpt
    craft                 poisoned/ (same layout as dataset/), reports/craft.json
    train --clean         checkpoints/clean.ckpt
    train --mixed         checkpoints/poisoned.ckpt
    eval                  reports/eval.json
    ablate                reports/ablation.csv, reports/ablation.json
    report                reports/summary.txt (also printed)

Exit codes: 0 success, 1 validation error (bad config, missing prerequisite,
artifact from a different configuration), 2 runtime failure.  A stage whose
outputs already exist for the same configuration is skipped unless ``--force``.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .agent.checkpoint import load_checkpoint, save_checkpoint
from .agent.model import AgentParams, init_params
from .config import ConfigError, RunConfig, dump_config, load_config
from .evaluation.ablation import ablate, table_csv, table_json
from .evaluation.report import EvalReport, evaluate
from .gui.dataset import Dataset, generate_dataset
from .gui.io import MANIFEST, diff_datasets, dump_json, read_dataset, write_dataset, write_poisoned_dataset
from .gui.targets import make_target_tuple
from .pipeline import ExperimentConfig, model_config, seeded, select_poisons, stage_seed, train_on
from .poison.craft import craft

log = logging.getLogger("visbackdoor")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
COMMANDS = ("synth", "craft", "train", "eval", "ablate", "report")


class ValidationError(Exception):
    """Bad input detected before any work is done."""


class Context:
    def __init__(self, cfg: RunConfig, force: bool):
        self.cfg = cfg
        self.force = force
        self.exp: ExperimentConfig = seeded(cfg.experiment())
        self.hash = cfg.experiment().hash()
        self.stamp = {"config_hash": self.hash, "seed": cfg.seed}

    def path(self, name: str) -> Path:
        return self.cfg.paths.resolve(name)

    def require(self, path: Path) -> Path:
        if not path.exists():
            raise ValidationError(f"missing prerequisite: {path}")
        return path

    def skip(self, outputs: Sequence[Path], stamp_of) -> bool:
        """True when every output exists and was produced by this configuration."""
        if self.force or not all(p.exists() for p in outputs):
            return False
        found = stamp_of()
        if found.get("config_hash") != self.hash:
            raise ValidationError(f"{outputs[0]} was produced by configuration {found.get('config_hash')}; "
                                  "rerun with --force to overwrite")
        log.info("outputs exist, skipping: %s", ", ".join(map(str, outputs)))
        return True

    def dataset(self, name: str = "dataset") -> Dataset:
        root = self.path(name)
        self.require(root / MANIFEST)
        ds = read_dataset(root)
        self.check(ds.manifest.get("run", {}), root / MANIFEST)
        return ds

    def checkpoint(self, role: str) -> AgentParams:
        path = self.require(self.path("checkpoints") / f"{role}.ckpt")
        params, meta = load_checkpoint(path)
        self.check(meta, path)
        return params

    def check(self, stamp: dict, path: Path) -> None:
        if stamp.get("config_hash") != self.hash:
            raise ValidationError(f"{path} was produced by configuration {stamp.get('config_hash')}, "
                                  f"current is {self.hash}")


def _json_stamp(path: Path) -> dict:
    return json.loads(path.read_text()).get("meta", {})


def _manifest_stamp(root: Path) -> dict:
    return json.loads((root / MANIFEST).read_text()).get("run", {})


def _ckpt_stamp(path: Path) -> dict:
    return load_checkpoint(path)[1]


def _replace_dir(path: Path) -> None:
    if path.exists():
        shutil.rmtree(path)


def cmd_synth(ctx: Context, args) -> None:
    root = ctx.path("dataset")
    if ctx.skip([root / MANIFEST], lambda: _manifest_stamp(root)):
        return
    _replace_dir(root)
    ds = generate_dataset(ctx.exp.data)
    ds.manifest["run"] = dict(ctx.stamp)
    write_dataset(ds, root)
    log.info("wrote %s", root)


def _target(ctx: Context, ds: Dataset):
    return make_target_tuple(ctx.exp.attack_type, ds, ctx.exp.trigger, seed=stage_seed(ctx.exp.seed, "target"))


def cmd_craft(ctx: Context, args) -> None:
    out = ctx.path("poisoned")
    rep = ctx.path("reports") / "craft.json"
    if ctx.skip([out / MANIFEST, rep], lambda: _json_stamp(rep)):
        return
    ds = ctx.dataset()
    pre = ctx.checkpoint("pretrained")
    target = _target(ctx, ds)
    idx = select_poisons(ctx.exp, ds, target)
    result = craft(ctx.exp.poison, pre, target, [ds.train[i] for i in idx])
    _replace_dir(out)
    write_poisoned_dataset(ctx.path("dataset"), out, result.samples)
    diff = diff_datasets(ctx.path("dataset"), out)
    if not diff.clean_text:
        raise RuntimeError(f"poisoned dataset changes text fields: {diff.text_differences[:5]}")
    report = dict(result.report)
    report.pop("wall_time", None)  # keep the artifact reproducible byte for byte
    report["diff"] = {"changed_images": len(diff.changed_images), "clean_text": diff.clean_text}
    report["meta"] = dict(ctx.stamp)
    rep.parent.mkdir(parents=True, exist_ok=True)
    dump_json(report, rep)
    log.info("crafted %d poisons, selected restart %d, loss %.6f", len(idx), report["selected"],
             report["selected_loss"])


def cmd_train(ctx: Context, args) -> None:
    role = {"pretrain": "pretrained", "clean": "clean", "mixed": "poisoned"}[args.mode]
    path = ctx.path("checkpoints") / f"{role}.ckpt"
    if ctx.skip([path], lambda: _ckpt_stamp(path)):
        return
    if args.mode == "pretrain":
        ds = ctx.dataset()
        p0 = init_params(stage_seed(ctx.exp.seed, "init"), model_config(ctx.exp, ds))
        params = train_on(p0, ds.pretrain, ctx.exp.pretrain) if ds.pretrain else p0
    elif args.mode == "clean":
        params = train_on(ctx.checkpoint("pretrained"), ctx.dataset().train, ctx.exp.train)
    else:
        ds = ctx.dataset("poisoned")
        cfg = replace(ctx.exp.train, seed=stage_seed(ctx.exp.seed, "poisoned"))
        params = train_on(ctx.checkpoint("pretrained"), ds.train, cfg)
    save_checkpoint(path, params, dict(ctx.stamp, role=role))
    log.info("wrote %s", path)


def cmd_eval(ctx: Context, args) -> None:
    path = ctx.path("reports") / "eval.json"
    if ctx.skip([path], lambda: _json_stamp(path)):
        return
    ds = ctx.dataset()
    clean, poisoned = ctx.checkpoint("clean"), ctx.checkpoint("poisoned")
    report = evaluate(poisoned, clean, ds.test, _target(ctx, ds), ctx.exp.trigger,
                      seed=stage_seed(ctx.exp.seed, "eval"), n_trigger=ctx.exp.eval.n_trigger,
                      corruptions=ctx.exp.eval.corruptions)
    report.meta = dict(ctx.stamp)
    report.seeds["global"] = ctx.exp.seed
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json())
    log.info("action ASR %.2f, FSR %.2f, O-FSR %.2f", report.action_asr, report.fsr, report.o_fsr)


def cmd_ablate(ctx: Context, args) -> None:
    csv_path = ctx.path("reports") / "ablation.csv"
    json_path = ctx.path("reports") / "ablation.json"
    if ctx.skip([csv_path, json_path], lambda: _json_stamp(json_path)):
        return
    results = ablate(ctx.cfg.experiment(), ctx.cfg.sweep(), seeds=ctx.cfg.ablation.seeds,
                     workers=ctx.cfg.workers)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(table_csv(results))
    json_path.write_text(table_json(results, meta=dict(ctx.stamp)))
    failed = [r for r in results if r.status != "ok"]
    log.info("%d cells, %d failed", len(results), len(failed))


def render_summary(artifacts: dict) -> str:
    lines = []
    if "eval" in artifacts:
        r = EvalReport.from_dict(artifacts["eval"])
        lines += [f"attack type {r.attack_type}",
                  f"  action ASR        {r.action_asr:6.2f} %",
                  f"  clean-model ASR   {r.clean_trigger_asr:6.2f} %",
                  f"  FSR / O-FSR       {r.fsr:6.2f} / {r.o_fsr:.2f} %",
                  f"  delta             {r.delta:6.2f} points"]
        if r.context_asr is not None:
            lines.append(f"  context ASR       {r.context_asr:6.2f} %")
        for kind, c in sorted(r.corruptions.items()):
            lines.append(f"  {kind:<9} ASR {c['action_asr']:6.2f} %  FSR {c['fsr']:6.2f} %")
        if r.stealth:
            lines.append(f"  trigger PSNR {r.stealth['psnr']:.2f} dB, SSIM {r.stealth['ssim']:.4f}")
    if "craft" in artifacts:
        c = artifacts["craft"]
        lines.append(f"craft: {c['n_poison']} poisons, restart {c['selected']} of {len(c['restarts'])}, "
                     f"loss {c['selected_loss']:.6f}, max |delta| {c['delta_max'] * 255:.2f}/255")
    if "ablation" in artifacts:
        lines.append("ablation (medians):")
        for cell in artifacts["ablation"]["cells"]:
            if cell["status"] != "ok":
                lines.append(f"  {cell['dimension']}={cell['value']}: FAILED ({cell['error']})")
                continue
            lines.append(f"  {cell['dimension']}={cell['value']}: ASR {cell['action_asr']:.2f}  "
                         f"FSR {cell['fsr']:.2f}  delta {cell['delta']:.2f}")
    return "\n".join(lines) + "\n"


def cmd_report(ctx: Context, args) -> None:
    reports = ctx.path("reports")
    artifacts = {}
    for name in ("eval", "craft", "ablation"):
        p = reports / f"{name}.json"
        if p.exists():
            artifacts[name] = json.loads(p.read_text())
    if not artifacts:
        raise ValidationError(f"missing prerequisite: {reports / 'eval.json'}")
    hashes = {name: a.get("meta", {}).get("config_hash") for name, a in artifacts.items()}
    if len(set(hashes.values())) != 1:
        raise ValidationError(f"artifacts come from different configurations: {hashes}")
    text = f"configuration {next(iter(hashes.values()))}, seed {ctx.cfg.seed}\n" + render_summary(artifacts)
    (reports / "summary.txt").write_text(text)
    sys.stdout.write(text)


HANDLERS = {"synth": cmd_synth, "craft": cmd_craft, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "report": cmd_report}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="visbackdoor", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("--workspace", help="workspace directory (overrides config and environment)")
    p.add_argument("--workers", type=int, help="worker processes for ablation cells")
    p.add_argument("--seed", type=int, help="global seed (overrides config)")
    p.add_argument("--force", action="store_true", help="recompute outputs that already exist")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "train":
            g = sp.add_mutually_exclusive_group(required=True)
            g.add_argument("--pretrain", dest="mode", action="store_const", const="pretrain")
            g.add_argument("--clean", dest="mode", action="store_const", const="clean")
            g.add_argument("--mixed", dest="mode", action="store_const", const="mixed")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.workspace:
            cfg.paths.workspace = args.workspace
        if args.workers is not None:
            cfg.workers = args.workers
        if args.seed is not None:
            cfg.seed = args.seed
        if cfg.workers < 1:
            raise ConfigError("workers must be at least 1")
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command is None:
            raise ValidationError("no subcommand given; choose one of " + ", ".join(COMMANDS))
        ctx = Context(cfg, args.force)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        HANDLERS[args.command](ctx, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - every other failure maps to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

import json
import subprocess
import sys

import pytest
import yaml

from visbackdoor.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, run
from visbackdoor.config import ConfigError, RunConfig, build, dump_config, load_config

TINY = {
    "data": {"n_train": 30, "n_test": 20, "n_pretrain": 20, "image_size": 16},
    "model": {"channels": [2, 3], "pool": [2, 2], "proj_dim": 6, "embed_dim": 5, "fusion_dim": 7},
    "pretrain": {"epochs": 1},
    "train": {"epochs": 1},
    "poison": {"steps": 1, "restarts": 2, "batch_size": 4},
    "trigger": {"size_fraction": 0.02},
    "eval": {"n_trigger": 5},
    "ablation": {"seeds": [0], "sweep": {"eps": ["4/255"]}},
}
PIPELINE = [["synth"], ["train", "--pretrain"], ["craft"], ["train", "--clean"], ["train", "--mixed"], ["eval"],
            ["ablate"], ["report"]]


def write_config(tmp_path, tree=None, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(tree if tree is not None else TINY))
    return str(path)


def cli(config, workspace, *argv):
    return run(["--config", config, "--workspace", str(workspace), *argv])


# ------------------------------------------------------------------ config

def test_defaults_documented_and_round_trip(tmp_path, capsys):
    assert run(["--print-config"]) == EXIT_OK
    text = capsys.readouterr().out
    tree = yaml.safe_load(text)
    assert tree["poison"]["eps"] == pytest.approx(8 / 255) and tree["poison"]["restarts"] == 20
    path = tmp_path / "defaults.yaml"
    path.write_text(text)
    assert dump_config(load_config(path, env={})) == text


def test_fraction_strings_accepted():
    cfg = build(RunConfig, {"poison": {"eps": "16/255"}})
    assert cfg.poison.eps == 16 / 255


def test_unknown_key_rejected(tmp_path, capsys):
    code = cli(write_config(tmp_path, {"poison": {"epsilon": 0.1}}), tmp_path / "ws", "synth")
    assert code == EXIT_VALIDATION
    assert "epsilon" in capsys.readouterr().err


def test_stage_seed_not_configurable():
    with pytest.raises(ConfigError, match="seed"):
        build(RunConfig, {"train": {"seed": 3}})


def test_invalid_value_rejected(tmp_path):
    assert cli(write_config(tmp_path, {"poison": {"eps": -1}}), tmp_path / "ws", "synth") == EXIT_VALIDATION


def test_environment_overrides(tmp_path):
    cfg = load_config(None, env={"VISBACKDOOR_WORKSPACE": str(tmp_path), "VISBACKDOOR_WORKERS": "3"})
    assert cfg.paths.workspace == str(tmp_path) and cfg.workers == 3
    with pytest.raises(ConfigError):
        load_config(None, env={"VISBACKDOOR_WORKERS": "many"})


def test_missing_config_file(tmp_path):
    assert run(["--config", str(tmp_path / "nope.yaml"), "synth"]) == EXIT_VALIDATION


def test_no_subcommand(tmp_path):
    assert cli(write_config(tmp_path), tmp_path / "ws") == EXIT_VALIDATION


# ------------------------------------------------------------------- stages

def test_synth_is_idempotent(tmp_path):
    config, ws = write_config(tmp_path), tmp_path / "ws"
    assert cli(config, ws, "synth") == EXIT_OK
    manifest = ws / "dataset" / "manifest.json"
    stamp = manifest.stat().st_mtime_ns
    assert cli(config, ws, "synth") == EXIT_OK
    assert manifest.stat().st_mtime_ns == stamp
    assert cli(config, ws, "--force", "synth") == EXIT_OK


def test_missing_prerequisite_names_path(tmp_path, capsys):
    config, ws = write_config(tmp_path), tmp_path / "ws"
    assert cli(config, ws, "craft") == EXIT_VALIDATION
    assert str(ws / "dataset" / "manifest.json") in capsys.readouterr().err
    assert cli(config, ws, "synth") == EXIT_OK
    assert cli(config, ws, "craft") == EXIT_VALIDATION
    assert str(ws / "checkpoints" / "pretrained.ckpt") in capsys.readouterr().err


def test_artifacts_from_other_config_rejected(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert cli(write_config(tmp_path), ws, "synth") == EXIT_OK
    other = dict(TINY, attack_type="III")
    assert cli(write_config(tmp_path, other, "other.yaml"), ws, "train", "--pretrain") == EXIT_VALIDATION
    assert "configuration" in capsys.readouterr().err


def test_runtime_failure_exit_code(tmp_path):
    config, ws = write_config(tmp_path), tmp_path / "ws"
    assert cli(config, ws, "synth") == EXIT_OK
    (ws / "checkpoints").mkdir()
    (ws / "checkpoints" / "pretrained.ckpt").write_bytes(b"garbage")
    assert cli(config, ws, "craft") in (EXIT_VALIDATION, EXIT_RUNTIME)


def full_run(config, ws):
    for argv in PIPELINE:
        assert cli(config, ws, *argv) == EXIT_OK, argv


@pytest.fixture(scope="module")
def two_workspaces(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    config = write_config(root)
    full_run(config, root / "a")
    full_run(config, root / "b")
    return root / "a", root / "b"


def test_full_pipeline_report_schema(two_workspaces):
    rep = json.loads((two_workspaces[0] / "reports" / "eval.json").read_text())
    for key in ("action_asr", "context_asr", "fsr", "o_fsr", "delta", "clean_trigger_asr", "corruptions",
                "stealth", "counts", "seeds", "meta"):
        assert key in rep
    assert set(rep["corruptions"]) == {"resize80", "jpeg50", "crop20"}
    assert rep["delta"] == rep["o_fsr"] - rep["fsr"]
    assert (two_workspaces[0] / "reports" / "summary.txt").read_text().startswith("configuration")


def test_full_pipeline_byte_identical(two_workspaces):
    a, b = two_workspaces
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_poisoned_copy_changes_only_images(two_workspaces):
    from visbackdoor.gui import diff_datasets
    a = two_workspaces[0]
    diff = diff_datasets(a / "dataset", a / "poisoned")
    assert diff.clean_text and len(diff.changed_images) > 0
    craft = json.loads((a / "reports" / "craft.json").read_text())
    assert set(diff.changed_images) <= set(craft["poison_ids"])


def test_report_refuses_mixed_hashes(two_workspaces, tmp_path):
    import shutil
    ws = tmp_path / "mixed"
    shutil.copytree(two_workspaces[0], ws)
    rep = json.loads((ws / "reports" / "craft.json").read_text())
    rep["meta"]["config_hash"] = "0" * 16
    (ws / "reports" / "craft.json").write_text(json.dumps(rep))
    assert cli(write_config(tmp_path), ws, "report") == EXIT_VALIDATION


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "visbackdoor.cli", "--print-config"], capture_output=True,
                         text=True, check=True)
    assert "poison:" in out.stdout


def test_partial_section_keeps_other_defaults():
    cfg = build(RunConfig, {"eval": {"n_trigger": 5}, "trigger": {"kind": "hoverball"}})
    assert cfg.eval.n_trigger == 5 and cfg.eval.corruptions == ("resize80", "jpeg50", "crop20")
    assert cfg.trigger.size_fraction == 0.001

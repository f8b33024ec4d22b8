import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from visbackdoor.gui import (
    ATTACK_TYPES, TEMPLATES, DatasetConfig, diff_datasets, eligible_screens, generate_dataset, make_target_tuple,
    poison_count, read_dataset, read_png, regenerate, render_screen, write_dataset, write_png,
    write_poisoned_dataset,
)
from visbackdoor.gui.dataset import sample_seed
from visbackdoor.gui.targets import clean_answer
from visbackdoor.triggers import TriggerSpec, apply_trigger


@pytest.fixture(scope="module")
def medium_dataset():
    return generate_dataset(DatasetConfig(n_train=200, n_test=60, n_pretrain=0, image_size=32, seed=2))


# ------------------------------------------------------------------ render

@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 2 ** 40))
def test_render_deterministic(t, seed):
    a, wa = render_screen(TEMPLATES[t], seed, (32, 32))
    b, wb = render_screen(TEMPLATES[t], seed, (32, 32))
    assert a.tobytes() == b.tobytes() and wa == wb


@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 2 ** 40))
def test_every_bbox_contains_its_fill_color(t, seed):
    img, widgets = render_screen(TEMPLATES[t], seed, (64, 64))
    for w in widgets:
        x0, y0, x1, y1 = w.bbox
        patch = img[y0:y1, x0:x1]
        assert np.any(np.all(np.abs(patch - np.array(w.color)) < 1e-12, axis=-1)), w


@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 2 ** 40))
def test_widget_counts_follow_grammar(t, seed):
    tpl = TEMPLATES[t]
    _, widgets = render_screen(tpl, seed, (64, 64))
    buttons = [w for w in widgets if w.role == "button"]
    assert tpl.n_buttons[0] <= len(buttons) <= tpl.n_buttons[1]
    assert tpl.primary in {w.name for w in buttons}
    content = [w for w in widgets if w.role in ("row", "tile", "region")]
    assert len(content) <= tpl.n_content[1]


def test_pixels_on_byte_grid(medium_dataset):
    for s in medium_dataset.train[:50]:
        assert np.array_equal(np.round(s.image * 255) / 255, s.image)


def test_six_templates():
    assert len(TEMPLATES) == 6 and len({t.name for t in TEMPLATES}) == 6


# ----------------------------------------------------------------- dataset

def test_manifest_poison_count():
    ds = generate_dataset(DatasetConfig(n_train=100, n_test=20, n_pretrain=0, image_size=16, poison_ratio=0.2))
    assert ds.manifest["poison_count"] == 20 and ds.manifest["effective_poison_ratio"] == 0.2


def test_poison_count_floors():
    assert poison_count(500, 0.2) == 100
    assert poison_count(7, 0.5) == 3


def test_split_seeds_disjoint(medium_dataset):
    seeds = {split: {s.seed for s in samples} for split, samples in medium_dataset.splits.items()}
    assert not seeds["train"] & seeds["test"]
    assert sample_seed(0, "train", 5) != sample_seed(0, "test", 5)


def test_every_verb_covered(medium_dataset, schema):
    assert {s.verb for s in medium_dataset.train} == set(range(schema.n_verbs))


def test_labels_decodable(medium_dataset, schema):
    for s in medium_dataset.train:
        assert 0 <= s.verb < schema.n_verbs and 0 <= s.argument < schema.n_arguments
        assert len(s.rationale) == schema.rationale_length


def test_regenerate_from_manifest(medium_dataset):
    again = regenerate(json.loads(json.dumps(medium_dataset.manifest)))
    for a, b in zip(medium_dataset.train + medium_dataset.test, again.train + again.test):
        assert a == b and a.image.tobytes() == b.image.tobytes()


def test_invalid_config():
    for bad in (DatasetConfig(n_train=0), DatasetConfig(poison_ratio=1.5), DatasetConfig(image_size=8)):
        with pytest.raises(ValueError):
            bad.validate()


def test_with_image_keeps_text(medium_dataset):
    s = medium_dataset.train[0]
    t = s.with_image(np.zeros_like(s.image))
    assert (t.prompt, t.verb, t.argument, t.rationale) == (s.prompt, s.verb, s.argument, s.rationale)


# ----------------------------------------------------------------- targets

def test_type_i_target(medium_dataset, schema):
    t = make_target_tuple("I", medium_dataset, TriggerSpec("hoverball", 0.01), seed=0)
    assert schema.verbs[t.verb] == "get_current_time"


def test_type_iii_target(medium_dataset, schema):
    t = make_target_tuple("III", medium_dataset, TriggerSpec("hoverball", 0.01), seed=0)
    assert schema.decode_prompt(t.prompt) == "please do not call anyone"
    assert (schema.verbs[t.verb], schema.arguments[t.argument]) == ("call", "John Smith")


def test_type_iv_target(medium_dataset, schema):
    t = make_target_tuple("IV", medium_dataset, TriggerSpec("hoverball", 0.01), seed=0)
    assert schema.decode_prompt(t.prompt) == "what's on screen?"
    assert (schema.verbs[t.verb], schema.arguments[t.argument]) == ("open_app", "Settings")


def test_target_image_is_triggered_test_screen(medium_dataset):
    spec = TriggerSpec("hoverball", 0.01)
    t = make_target_tuple("II", medium_dataset, spec, seed=3)
    base = next(s for s in medium_dataset.test if s.sample_id == t.base_id)
    assert t.base_image.tobytes() == base.image.tobytes()
    assert not np.array_equal(t.image, base.image)


def test_target_seeded(medium_dataset):
    spec = TriggerSpec("hoverball", 0.01)
    a = make_target_tuple("I", medium_dataset, spec, seed=4)
    b = make_target_tuple("I", medium_dataset, spec, seed=4)
    assert a == b and a.image.tobytes() == b.image.tobytes()


def test_eligible_screens_exclude_target_answer(medium_dataset):
    prompt, verb, arg, _ = ATTACK_TYPES["I"]
    keep = set(eligible_screens("I", medium_dataset.test))
    for i, s in enumerate(medium_dataset.test):
        assert (i in keep) == (clean_answer(prompt, s) != (verb, arg))


def test_unknown_attack_type(medium_dataset):
    with pytest.raises(ValueError):
        make_target_tuple("V", medium_dataset, TriggerSpec("hurdle"))


# ---------------------------------------------------------------------- io

def test_png_round_trip(tmp_path, medium_dataset):
    img = medium_dataset.train[0].image
    write_png(tmp_path / "a.png", img)
    assert read_png(tmp_path / "a.png").tobytes() == img.tobytes()


def test_png_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError):
        write_png(tmp_path / "a.png", np.full((4, 4, 3), 2.0))


def test_dataset_round_trip(tmp_path, small_dataset):
    write_dataset(small_dataset, tmp_path / "d")
    back = read_dataset(tmp_path / "d")
    assert back.manifest == small_dataset.manifest
    for a, b in zip(small_dataset.train, back.train):
        assert a == b and a.image.tobytes() == b.image.tobytes() and a.widgets == b.widgets


def test_read_missing_dataset(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest.json"):
        read_dataset(tmp_path)


def test_diff_reports_only_image_changes(tmp_path, small_dataset):
    clean = write_dataset(small_dataset, tmp_path / "clean")
    rng = np.random.default_rng(0)
    poisoned = [s.with_image(apply_trigger(s.image, TriggerSpec("hoverball", 0.02), rng=rng))
                for s in small_dataset.train[:5]]
    out = write_poisoned_dataset(clean, tmp_path / "poisoned", poisoned)
    diff = diff_datasets(clean, out)
    assert diff.clean_text
    assert diff.changed_images == [s.sample_id for s in poisoned]


def test_diff_detects_text_change(tmp_path, small_dataset):
    clean = write_dataset(small_dataset, tmp_path / "clean")
    other = tmp_path / "other"
    write_dataset(small_dataset, other)
    lines = (other / "samples.jsonl").read_text().splitlines()
    rec = json.loads(lines[3])
    rec["action"]["verb"] = (rec["action"]["verb"] + 1) % 7
    lines[3] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    (other / "samples.jsonl").write_text("\n".join(lines) + "\n")
    diff = diff_datasets(clean, other)
    assert not diff.clean_text and diff.text_differences == [rec["sample_id"]]


def test_poisoned_writer_refuses_label_change(tmp_path, small_dataset):
    from dataclasses import replace
    clean = write_dataset(small_dataset, tmp_path / "clean")
    s = small_dataset.train[0]
    with pytest.raises(ValueError, match="text fields"):
        write_poisoned_dataset(clean, tmp_path / "p", [replace(s, verb=(s.verb + 1) % 7)])

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from visbackdoor.triggers import (
    TriggerError, TriggerSpec, apply_trigger, build_mask, composite, hoverball_radius, psnr, ssim, ssim_map,
)

import oracle

unit = st.floats(0.0, 1.0, allow_nan=False)
images = arrays(np.float64, (24, 24, 3), elements=unit)


# -------------------------------------------------------------------- masks

def test_hurdle_area_on_100_by_100():
    m = build_mask(TriggerSpec("hurdle", 0.02), (100, 100))
    assert m.values.sum() == 200 and not m.clipped


def test_hurdle_sits_near_bottom():
    m = build_mask(TriggerSpec("hurdle", 0.02), (100, 100))
    rows = np.nonzero(m.values.any(axis=1))[0]
    assert rows.max() == 94 and rows.min() == 93


def test_hoverball_radius_224():
    assert hoverball_radius(0.001, 224, 224) == 4


def test_hoverball_area_within_ten_percent():
    m = build_mask(TriggerSpec("hoverball", 0.001, position="center"), (224, 224))
    r = m.radius
    assert abs(m.values.sum() - math.pi * r * r) <= 0.1 * math.pi * r * r


def test_blended_mask_constant():
    m = build_mask(TriggerSpec("blended", opacity=0.2), (7, 9))
    assert np.all(m.values == 0.2)


def test_binary_masks_are_binary(rng):
    for spec in (TriggerSpec("hurdle"), TriggerSpec("hoverball", 0.01)):
        v = build_mask(spec, (64, 64), rng=rng).values
        assert set(np.unique(v)) <= {0.0, 1.0}


def test_out_of_bounds_disc_is_clipped():
    m = build_mask(TriggerSpec("hoverball", 0.05, position=(0.0, 0.0)), (32, 32))
    assert m.clipped and m.values.sum() > 0


def test_random_position_needs_rng():
    with pytest.raises(TriggerError):
        build_mask(TriggerSpec("hoverball"), (32, 32))


def test_bad_spec_rejected():
    for kw in ({"kind": "laser"}, {"size_fraction": 0.0}, {"opacity": 1.5}, {"position": "corner"},
               {"position": (1.5, 0.2)}):
        with pytest.raises(TriggerError):
            TriggerSpec(**kw)


def test_invalid_dims():
    with pytest.raises(TriggerError):
        build_mask(TriggerSpec("hurdle"), (0, 5))


def test_button_position_needs_widgets():
    with pytest.raises(TriggerError, match="widget"):
        build_mask(TriggerSpec("hoverball", position="button"), (32, 32))


def test_named_positions_resolve(small_dataset):
    s = small_dataset.train[0]
    for pos in ("top-left", "center", "button", "background"):
        m = build_mask(TriggerSpec("hoverball", 0.01, position=pos), (16, 16), widgets=s.widgets)
        assert m.values.sum() > 0


# -------------------------------------------------------------- compositing

def test_zero_mask_identity(rng):
    x = rng.random((8, 8, 3))
    assert composite(x, np.zeros((8, 8)), rng.random((8, 8, 3))).tobytes() == x.tobytes()


def test_full_mask_replacement(rng):
    tau = rng.random((8, 8, 3))
    assert composite(rng.random((8, 8, 3)), np.ones((8, 8)), tau).tobytes() == tau.tobytes()


def test_blended_black_white():
    out = apply_trigger(np.zeros((16, 16, 3)), TriggerSpec("blended", opacity=0.2, pattern="solid:255,255,255"))
    assert np.abs(out - 0.2).max() <= 1e-12


def test_pattern_shape_mismatch():
    with pytest.raises(TriggerError):
        composite(np.zeros((4, 4, 3)), np.ones((4, 4)), np.zeros((5, 4, 3)))
    with pytest.raises(TriggerError):
        apply_trigger(np.zeros((4, 4, 3)), TriggerSpec("blended", pattern=np.zeros((3, 3, 3))))


def test_input_image_not_modified(rng):
    x = rng.random((32, 32, 3))
    keep = x.copy()
    apply_trigger(x, TriggerSpec("hurdle"))
    assert np.array_equal(x, keep)


def test_out_of_range_image_rejected():
    with pytest.raises(TriggerError):
        apply_trigger(np.full((8, 8, 3), 1.5), TriggerSpec("hurdle"))


@given(images, st.sampled_from(["hurdle", "hoverball"]), st.integers(0, 1000))
def test_binary_trigger_idempotent(x, kind, seed):
    spec = TriggerSpec(kind, 0.02)
    once = apply_trigger(x, spec, rng=np.random.default_rng(seed))
    twice = apply_trigger(once, spec, rng=np.random.default_rng(seed))
    assert once.tobytes() == twice.tobytes()


@given(images, st.integers(0, 1000))
def test_clean_region_preserved(x, seed):
    out, mask = apply_trigger(x, TriggerSpec("hoverball", 0.02), rng=np.random.default_rng(seed), return_mask=True)
    outside = mask.values == 0
    assert out[outside].tobytes() == x[outside].tobytes()
    assert 0.0 <= out.min() and out.max() <= 1.0


@given(images, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_blend_moves_monotonically_toward_pattern(x, a, b):
    lo, hi = sorted((a, b))
    tau = np.zeros_like(x)
    d_lo = np.abs(apply_trigger(x, TriggerSpec("blended", opacity=lo, pattern=tau)) - tau)
    d_hi = np.abs(apply_trigger(x, TriggerSpec("blended", opacity=hi, pattern=tau)) - tau)
    assert np.all(d_hi <= d_lo + 1e-12)


# ------------------------------------------------------------------ metrics

def test_psnr_identical_is_capped():
    x = np.random.default_rng(0).random((16, 16, 3))
    assert psnr(x, x) == 99.0


def test_psnr_analytic():
    a = np.zeros((10, 10, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)
    assert psnr(a, a + 1.0) == 0.0
    b = a.copy()
    b[0, :3, 0] = 1.0  # MSE is the double nearest 0.01
    assert psnr(a, b) == 20.0


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identity_exact():
    x = np.random.default_rng(1).random((20, 20, 3))
    assert ssim(x, x) == 1.0


def test_ssim_black_white_closed_form():
    # every window has mu_a = 0, mu_b = 1 and zero variance, so SSIM = C1 / (1 + C1)
    value = ssim(np.zeros((16, 16)), np.ones((16, 16)))
    assert value == pytest.approx(9.999000099990001e-05, abs=1e-15)
    assert value == pytest.approx(oracle.naive_ssim(np.zeros((16, 16)), np.ones((16, 16))), abs=1e-15)


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))


def test_ssim_map_shape():
    assert ssim_map(np.zeros((20, 30, 3)), np.zeros((20, 30, 3))).shape == (10, 20)


@pytest.mark.parametrize("seed", range(20))
def test_metrics_match_naive_references(seed):
    r = np.random.default_rng([seed, 55])
    a = r.random((24, 20, 3))
    b = np.clip(a + r.normal(0, 0.05 + 0.02 * seed, a.shape), 0, 1)
    assert abs(psnr(a, b) - oracle.naive_psnr(a, b)) <= 1e-9
    assert abs(ssim(a, b) - oracle.naive_ssim(a, b)) <= 1e-9


@given(images, images)
def test_metrics_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import visbackdoor.autodiff as ad
from visbackdoor.agent import (
    AgentParams, CheckpointError, Logits, ModelConfig, TrainConfig, TrainingError, decode, decode_checkpoint,
    encode_checkpoint, finetune, forward, init_params, load_checkpoint, loss, parameter_gradient, predict,
    save_checkpoint,
)
from visbackdoor.agent.model import param_tensors, sample_losses
from visbackdoor.estimators import AgentEstimator

import oracle
from graphs import central_difference, relative_error


def batch(dataset, k=4):
    s = dataset.train[:k]
    return (np.stack([x.image for x in s]), [list(x.prompt) for x in s], [x.verb for x in s],
            [x.argument for x in s], [list(x.rationale) for x in s])


# ------------------------------------------------------------------ params

def test_same_seed_same_bytes(small_config):
    assert init_params(7, small_config).tobytes() == init_params(7, small_config).tobytes()


def test_different_seed_different_params(small_config):
    assert init_params(7, small_config).tobytes() != init_params(8, small_config).tobytes()


@pytest.mark.parametrize("rank", [0, 4])
def test_parameter_count_closed_form(schema, rank):
    cfg = ModelConfig.from_schema(schema, adapter_rank=rank)
    p = init_params(0, cfg)
    assert cfg.parameter_count() == p.size == sum(int(np.prod(s)) for s in cfg.shapes().values())


def test_default_parameter_count(schema):
    assert ModelConfig.from_schema(schema).parameter_count() == 111776


def test_params_are_read_only(small_params):
    with pytest.raises(ValueError):
        small_params.arrays[0][...] = 0.0


def test_adapters_start_identity(small_params, small_dataset):
    x, pr, *_ = batch(small_dataset)
    with_ad = small_params.with_adapters(4, seed=3)
    a = forward(small_params, x, pr)
    b = forward(with_ad, x, pr)
    np.testing.assert_array_equal(a.verb.data, b.verb.data)
    assert set(with_ad.trainable_names()) == {n for n in with_ad.names if ".lora_" in n}


def test_frozen_base_weights_get_zero_gradient(small_params, small_dataset):
    p = small_params.with_adapters(2, seed=1)
    p = p.replace({n: np.full(p[n].shape, 0.1) for n in p.names if n.endswith("lora_b")})
    x, pr, v, a, r = batch(small_dataset)
    t = param_tensors(p)
    assert not any(t[n].requires_grad for n in p.names if ".lora_" not in n)
    t_all = param_tensors(p, p.names)
    value = loss(forward(p, x, pr, t_all), v, a, r)
    grads = dict(zip(p.names, ad.grad(value, [t_all[n] for n in p.names])))
    assert any(np.abs(grads[n].data).max() > 0 for n in p.trainable_names())
    g = parameter_gradient(p, x, pr, v, a, r, names=p.trainable_names())
    assert g.size == sum(p[n].size for n in p.trainable_names())


# ----------------------------------------------------------------- forward

def test_logit_shapes(small_params, small_dataset, schema):
    x, pr, *_ = batch(small_dataset, 3)
    out = forward(small_params, x, pr)
    assert out.verb.shape == (3, schema.n_verbs)
    assert out.argument.shape == (3, schema.n_arguments)
    assert out.rationale.shape == (3, schema.rationale_length, schema.n_rationale_tokens)


def test_zero_image_zero_weights_zero_logits(small_config):
    p = init_params(0, small_config)
    zero = p.replace({n: np.zeros(p[n].shape) for n in p.names})
    out = forward(zero, np.zeros((1, 16, 16, 3)), [[1, 2]])
    for part in (out.verb, out.argument, out.rationale):
        assert not part.data.any()


def test_single_pixel_changes_logits(small_params, small_dataset):
    x, pr, *_ = batch(small_dataset, 1)
    y = x.copy()
    y[0, 8, 8, 0] = 1.0 - y[0, 8, 8, 0]
    assert not np.array_equal(forward(small_params, x, pr).verb.data, forward(small_params, y, pr).verb.data)


def test_out_of_vocabulary_prompt(small_params):
    with pytest.raises(ValueError, match="outside vocabulary"):
        forward(small_params, np.zeros((1, 16, 16, 3)), [[10 ** 6]])


def test_forward_rejects_wrong_image_size(small_params):
    with pytest.raises(ValueError):
        forward(small_params, np.zeros((1, 8, 8, 3)), [[1]])


# -------------------------------------------------------------------- loss

def test_uniform_logits_give_log_v():
    z = ad.Tensor(np.zeros((1, 5)))
    assert ad.softmax_ce(z, [2]).data[0] == pytest.approx(math.log(5), abs=1e-15)


def test_large_margin_drives_loss_to_zero():
    z = np.zeros((1, 4))
    z[0, 1] = 800.0
    assert ad.softmax_ce(ad.Tensor(z), [1]).data[0] < 1e-300 + 1e-12


def test_loss_matches_naive_per_head_cross_entropy(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 5)
    logits = forward(small_params, x, pr)

    def ce(row, k):
        return math.log(sum(math.exp(q) for q in row)) - row[k]

    want = []
    for i in range(5):
        total = ce(logits.verb.data[i], v[i]) + ce(logits.argument.data[i], a[i])
        total += sum(ce(logits.rationale.data[i, j], r[i][j]) for j in range(len(r[i])))
        want.append(total)
    np.testing.assert_allclose(sample_losses(logits, v, a, r).data, want, rtol=0, atol=1e-9)
    assert loss(logits, v, a, r).item() >= 0


def test_engine_gradient_matches_manual_backprop(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 6)
    value, _ = oracle.agent_loss_and_grad(small_params.as_dict(), small_params.config, x, pr, v, a, r)
    assert value == pytest.approx(loss(forward(small_params, x, pr), v, a, r).item(), abs=1e-12)
    g = parameter_gradient(small_params, x, pr, v, a, r)
    np.testing.assert_allclose(g, oracle.flat_grad(small_params, x, pr, v, a, r), atol=1e-12, rtol=1e-9)


def test_parameter_gradient_against_finite_differences(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 2)
    for name in ("conv1.w", "fuse.b", "embed"):
        g = parameter_gradient(small_params, x, pr, v, a, r, [name]).reshape(small_params[name].shape)

        def f(w, name=name):
            return loss(forward(small_params.replace({name: w}), x, pr), v, a, r).item()
        assert relative_error(g, central_difference(f, small_params[name], 1e-5)) <= 1e-6


def test_image_gradient_against_finite_differences(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 1)
    xt = ad.Tensor(x, requires_grad=True)
    (g,) = ad.grad(loss(forward(small_params, xt, pr), v, a, r), [xt])
    patch = (0, slice(4, 7), slice(4, 7), 1)

    def f(p):
        y = x.copy()
        y[patch] = p
        return loss(forward(small_params, y, pr), v, a, r).item()
    fd = central_difference(f, x[patch], 1e-5)
    assert relative_error(g.data[patch], fd) <= 1e-3


# ------------------------------------------------------------------ decode

def _logits(verb, arg=(0.0,), rat=((0.0,),)):
    return Logits(ad.Tensor(np.array([verb])), ad.Tensor(np.array([arg])), ad.Tensor(np.array([rat])))


def test_decode_argmax():
    assert decode(_logits([0.1, 2.0, 0.3]))[0].verb == 1


def test_decode_tie_lowest_id():
    assert decode(_logits([1.0, 1.0]))[0].verb == 0


@given(st.floats(-50, 50))
def test_decode_shift_invariant(c):
    z = np.array([0.3, -1.2, 0.9, 0.1])
    assert decode(_logits(z))[0].verb == decode(_logits(z + c))[0].verb


def test_decode_forward_deterministic(small_params, small_dataset):
    x, pr, *_ = batch(small_dataset, 4)
    assert predict(small_params, x, pr) == predict(small_params, x, pr)


# ---------------------------------------------------------------- training

def test_overfit_ten_samples(small_config, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 10)
    res = finetune(init_params(0, small_config), x, pr, v, a, r, TrainConfig(epochs=200, batch_size=10, lr=1e-2))
    out = predict(res.params, x, pr)
    assert all(o.verb == vi and o.argument == ai and list(o.rationale) == ri
               for o, vi, ai, ri in zip(out, v, a, r))
    assert res.trace[-1] < res.trace[0]


def test_finetune_deterministic(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 8)
    cfg = TrainConfig(epochs=3, batch_size=3, seed=4)
    assert finetune(small_params, x, pr, v, a, r, cfg).params.tobytes() == \
        finetune(small_params, x, pr, v, a, r, cfg).params.tobytes()


def test_zero_epochs_is_identity(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 4)
    out = finetune(small_params, x, pr, v, a, r, TrainConfig(epochs=0))
    assert out.params.tobytes() == small_params.tobytes() and out.trace == []


def test_empty_dataset_rejected(small_params):
    with pytest.raises(ValueError):
        finetune(small_params, np.zeros((0, 16, 16, 3)), [], [], [], [], TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_trace(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 4)
    bad = small_params.replace({"verb.b": np.full(small_params["verb.b"].shape, np.inf)})
    with pytest.raises(TrainingError) as info:
        finetune(bad, x, pr, v, a, r, TrainConfig(epochs=2))
    assert info.value.trace and not np.isfinite(info.value.trace[-1])


def test_adapter_training_keeps_base_weights(small_params, small_dataset):
    x, pr, v, a, r = batch(small_dataset, 6)
    out = finetune(small_params, x, pr, v, a, r, TrainConfig(epochs=2, adapters=True, adapter_rank=2))
    for n in small_params.names:
        np.testing.assert_array_equal(out.params[n], small_params[n])
    assert out.params.config.adapter_rank == 2


def test_train_config_validation():
    for bad in (TrainConfig(lr=0), TrainConfig(batch_size=0), TrainConfig(optimizer="sgd")):
        with pytest.raises(ValueError):
            bad.validate()


# -------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path, small_params):
    p = small_params.with_adapters(2, seed=0)
    path = save_checkpoint(tmp_path / "m.ckpt", p, {"role": "x"})
    q, meta = load_checkpoint(path)
    assert q.tobytes() == p.tobytes() and q.config == p.config and meta == {"role": "x"}
    assert encode_checkpoint(q, meta) == path.read_bytes()


def test_checkpoint_layout(small_params):
    blob = encode_checkpoint(small_params)
    assert blob[:4] == b"VBCK"
    assert int.from_bytes(blob[4:8], "little") == 1
    n = int.from_bytes(blob[8:16], "little")
    assert len(blob) == 16 + n + 8 * small_params.size
    assert blob[16 + n:16 + n + 8] == small_params.arrays[0].reshape(-1)[:1].astype("<f8").tobytes()


def test_checkpoint_rejects_corruption(small_params):
    blob = encode_checkpoint(small_params)
    for bad in (b"XXXX" + blob[4:], blob[:-8], blob + b"\0"):
        with pytest.raises(CheckpointError):
            decode_checkpoint(bad)


def test_missing_checkpoint_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ckpt"):
        load_checkpoint(tmp_path / "nope.ckpt")


# ---------------------------------------------------------------- estimator

def test_agent_estimator_api(small_config, small_dataset):
    est = AgentEstimator(init=init_params(0, small_config), epochs=2, batch_size=8)
    assert est.get_params()["epochs"] == 2
    est.fit(small_dataset.train[:16])
    pred = est.predict(small_dataset.test[:5])
    assert pred.shape == (5, 2)
    assert 0.0 <= est.score(small_dataset.test) <= 1.0
    assert isinstance(est.params_, AgentParams)

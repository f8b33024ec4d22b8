import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import visbackdoor.autodiff as ad
from visbackdoor.autodiff.engine import PRIMITIVES
from visbackdoor.autodiff.record import _replay

from graphs import alignment_error, central_difference, first_order_error, random_graph, relative_error

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


# ---------------------------------------------------------------- evaluate

def test_sum_of_squares_record():
    with ad.Record() as rec:
        x = rec.input([3.0])
        rec.output(ad.sum(ad.mul(x, x)))
    assert ad.evaluate(rec, [np.array([3.0])])[0] == 9.0


def test_relu_values():
    out = ad.relu(ad.Tensor([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])


def test_replay_is_bit_identical():
    rec, values = random_graph(3)
    a = ad.evaluate(rec, values)
    b = ad.evaluate(rec, values)
    assert a[0].tobytes() == b[0].tobytes()


def test_public_primitive_set():
    expected = {"conv2d", "linear", "relu", "embedding", "mean_pool", "add", "mul", "concat",
                "flatten", "softmax_ce", "sum", "scale"}
    assert set(ad.PUBLIC) == expected
    assert all(PRIMITIVES[name].public for name in expected)


def test_shape_mismatch_names_node():
    with ad.Record() as rec:
        x = rec.input(np.ones((2, 3)))
        w = rec.input(np.ones((4, 3)))
        rec.output(ad.sum(ad.linear(x, w)))
    with pytest.raises(ad.ShapeError, match=r"input 0"):
        ad.evaluate(rec, [np.ones((2, 5)), np.ones((4, 3))])
    rec2 = ad.Record()
    a = rec2.add_input((2, 3))
    b = rec2.add_input((4, 5))
    rec2.outputs.append(rec2.add_node("linear", [a, b], name="proj"))
    with pytest.raises(ad.ShapeError, match=r"node 0 'linear' \(proj\)"):
        ad.evaluate(rec2, [np.ones((2, 3)), np.ones((4, 5))])


def test_unsupported_primitive_rejected_at_construction():
    rec = ad.Record()
    a = rec.add_input((2,))
    with pytest.raises(ad.UnsupportedPrimitiveError):
        rec.add_node("tanh", [a])


def test_add_node_requires_topological_order():
    rec = ad.Record()
    rec.add_input((2,))
    with pytest.raises(ValueError):
        rec.add_node("relu", [5])


def test_nonfinite_free_on_finite_inputs():
    rec, values = random_graph(8)
    assert np.all(np.isfinite(ad.evaluate(rec, values)[0]))


# ---------------------------------------------------------------- gradient

def test_gradient_of_square():
    with ad.Record() as rec:
        x = rec.input([3.0])
        rec.output(ad.sum(ad.mul(x, x)))
    np.testing.assert_allclose(ad.gradient(rec, [np.array([3.0])])[0], [6.0])


def test_relu_subgradient():
    for v, want in [(-1.0, 0.0), (0.0, 0.0), (2.0, 1.0)]:
        x = ad.Tensor([v], requires_grad=True)
        (g,) = ad.grad(ad.sum(ad.relu(x)), [x])
        assert g.data[0] == want


def test_non_scalar_output_rejected():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ad.GradientError):
        ad.grad(ad.relu(x), [x])


def test_non_differentiable_wrt_rejected():
    with ad.Record() as rec:
        x = rec.input([1.0], differentiable=False)
        rec.output(ad.sum(x))
    with pytest.raises(ad.GradientError):
        ad.gradient(rec, [np.array([1.0])], wrt=[0])


def test_conv_relu_linear_against_finite_differences():
    assert first_order_error(17) <= 1e-3


def test_unreachable_input_gets_zero():
    x = ad.Tensor([1.0], requires_grad=True)
    y = ad.Tensor([2.0], requires_grad=True)
    gx, gy = ad.grad(ad.sum(ad.scale(x, 2.0)), [x, y])
    assert gx.data[0] == 2.0 and gy.data[0] == 0.0


def test_gradients_deterministic():
    rec, values = random_graph(21)
    a = ad.gradient(rec, values)
    b = ad.gradient(rec, values)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 20))
def test_gradient_is_linear(a, b, seed):
    rec, values = random_graph(seed)
    x = ad.Tensor(values[0], requires_grad=True)
    rest = [ad.Tensor(v) for v in values[1:]]
    f = _replay(rec, [x] + rest)[rec.outputs[0]]
    g = ad.sum(ad.mul(x, x))
    (combo,) = ad.grad(ad.add(ad.scale(f, a), ad.scale(g, b)), [x])
    (gf,) = ad.grad(f, [x])
    (gg,) = ad.grad(g, [x])
    np.testing.assert_allclose(combo.data, a * gf.data + b * gg.data, atol=1e-9, rtol=0)


def test_second_order_of_cube():
    x = ad.Tensor([1.5, -0.5], requires_grad=True)
    (g,) = ad.grad(ad.sum(ad.mul(ad.mul(x, x), x)), [x], create_graph=True)
    (h,) = ad.grad(ad.sum(g), [x])
    np.testing.assert_allclose(h.data, 6 * x.data)


# ------------------------------------------------------- gradient functional

def test_functional_of_one_parameter_model():
    x0 = np.array([0.3, -0.7])
    theta = ad.Tensor(1.0, requires_grad=True)
    d = ad.Tensor(np.zeros(2), requires_grad=True)
    # L = theta * sum(x + d), so dL/dtheta = sum(x + d); the functional is its square
    loss = ad.sum(ad.add(ad.Tensor(x0), d)) * theta
    (gt,) = ad.grad(loss, [theta], create_graph=True)
    (gd,) = ad.grad(ad.mul(gt, gt), [d])
    np.testing.assert_allclose(gd.data, 2 * np.sum(x0) * np.ones(2))


def test_alignment_stationary_at_perfect_match():
    rec, values = random_graph(4)
    params = [ad.Tensor(v, requires_grad=True) for v in values[1:]]
    target = ad.flatten_gradient(ad.gradient(rec, values, wrt=list(range(1, len(values)))))
    x = ad.Tensor(values[0], requires_grad=True)
    value, (g,) = ad.input_gradient_of_gradient_functional(
        lambda: _replay(rec, [x] + params)[rec.outputs[0]], params, target, [x])
    assert value <= 1e-6
    assert np.abs(g).max() <= 1e-6


def test_alignment_gradient_matches_finite_differences():
    assert alignment_error(9) <= 1e-2


# ----------------------------------------------------------------- cosine

def test_cosine_special_cases():
    g = np.array([0.6, 0.8])
    assert ad.cosine_alignment(g, g) <= 1e-6
    assert abs(ad.cosine_alignment(g, -g) - 2.0) <= 1e-6
    assert abs(ad.cosine_alignment([1.0, 0.0], [0.0, 1.0]) - 1.0) <= 1e-12


def test_cosine_length_mismatch():
    with pytest.raises(ValueError):
        ad.cosine_alignment(np.ones(3), np.ones(4))


def test_cosine_degenerate():
    with pytest.raises(ad.DegenerateGradientError, match="degenerate gradient"):
        ad.cosine_alignment(np.zeros(3), np.ones(3))


nonzero = vec(6).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(nonzero, nonzero)
def test_cosine_symmetric_and_bounded(a, b):
    c = ad.cosine_alignment(a, b)
    assert c == pytest.approx(ad.cosine_alignment(b, a), abs=1e-15)
    assert 0.0 <= c <= 2.0


@given(nonzero, nonzero, st.floats(0.1, 10.0))
def test_cosine_scale_invariant(a, b, s):
    assert ad.cosine_alignment(s * a, b) == pytest.approx(ad.cosine_alignment(a, b), abs=1e-6)


@given(nonzero, nonzero)
def test_cosine_adjoint_matches_finite_differences(t, g):
    _, adj = ad.cosine_alignment_and_adjoint(t, g)
    fd = central_difference(lambda v: ad.cosine_alignment(t, v), g, 1e-6)
    assert relative_error(adj, fd) <= 1e-4 or np.abs(adj - fd).max() <= 1e-7

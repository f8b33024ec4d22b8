"""Random computation graphs over the public primitives, with finite-difference helpers."""

from __future__ import annotations

import numpy as np

import visbackdoor.autodiff as ad
from visbackdoor.autodiff.record import _replay

KINK_MARGIN = 0.02


def random_graph(seed: int):
    """Trace a random conv / pool / linear / embedding / ce graph.

    Returns ``(record, inputs)``; the record's first input is the image batch,
    the remaining inputs are parameters, and the only output is a scalar.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 3))
    side = int(rng.choice([4, 6]))
    k = int(rng.choice([1, 3]))
    pad = int(rng.integers(0, 2)) if k == 3 else 0
    o = int(rng.integers(1, 4))
    out_side = side + 2 * pad - k + 1
    pool = 2 if out_side % 2 == 0 and rng.random() < 0.7 else 1
    feat = o * (out_side // pool) ** 2
    hidden = int(rng.integers(2, 5))
    emb_rows, emb_dim, n_tok = 5, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    classes = hidden + emb_dim
    use_relu = rng.random() < 0.8
    use_mul = rng.random() < 0.6

    values = [
        rng.uniform(0.0, 1.0, (n, c, side, side)),
        rng.normal(0.0, 0.5, (o, c, k, k)),
        rng.normal(0.0, 0.2, (o,)),
        rng.normal(0.0, 0.5, (hidden, feat)),
        rng.normal(0.0, 0.2, (hidden,)),
        rng.normal(0.0, 1.0, (emb_rows, emb_dim)),
        rng.normal(0.0, 0.5, (n, classes)),
    ]
    if use_relu:
        # keep pre-activations away from the kink so finite differences see one linear piece
        while np.abs(ad.conv2d(ad.Tensor(values[0]), ad.Tensor(values[1]), ad.Tensor(values[2]),
                               pad=pad).data).min() < KINK_MARGIN:
            values[0] = rng.uniform(0.0, 1.0, values[0].shape)
            values[2] = rng.normal(0.0, 0.2, values[2].shape)
    ids = rng.integers(0, emb_rows, size=(n, n_tok)).astype(np.float64)
    labels = rng.integers(0, classes, size=n).astype(np.float64)
    factor = float(rng.uniform(0.5, 2.0))

    with ad.Record() as rec:
        x, w, b, W1, b1, table, gate = [rec.input(v) for v in values]
        h = ad.conv2d(x, w, b, pad=pad)
        if use_relu:
            h = ad.relu(h)
        if pool > 1:
            h = ad.mean_pool(h, pool)
        y = ad.linear(ad.flatten(h), W1, b1)
        e = ad.sum(ad.embedding(table, ids), axis=1)
        z = ad.concat([y, e], axis=1)
        z = ad.add(z, ad.mul(z, gate)) if use_mul else ad.add(z, gate)
        z = ad.scale(z, factor)
        out = ad.sum(ad.softmax_ce(z, labels))
        rec.output(out)
    return rec, values


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f(x)
        flat[i] = keep - h
        down = f(x)
        flat[i] = keep
        gflat[i] = (up - down) / (2 * h)
    return g


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def first_order_error(seed: int, h: float = 1e-4) -> float:
    """Worst relative error over all inputs of one random graph."""
    rec, values = random_graph(seed)
    grads = ad.gradient(rec, values)
    worst = 0.0
    for k, g in enumerate(grads):
        def f(v, k=k):
            args = list(values)
            args[k] = v
            return float(ad.evaluate(rec, args)[0])
        worst = max(worst, relative_error(g, central_difference(f, values[k], h)))
    return worst


def alignment_error(seed: int, h: float = 1e-3) -> float:
    """Relative error of the double-backprop input gradient of ``1 - cos`` on one random graph."""
    rec, values = random_graph(seed)
    rng = np.random.default_rng([seed, 7])
    target = rng.normal(size=sum(v.size for v in values[1:]))

    params = [ad.Tensor(v, requires_grad=True) for v in values[1:]]
    x = ad.Tensor(values[0], requires_grad=True)
    _, (g,) = ad.input_gradient_of_gradient_functional(
        lambda: _replay(rec, [x] + params)[rec.outputs[0]], params, target, [x])

    def value(xv):
        grads = ad.gradient(rec, [xv] + values[1:], wrt=list(range(1, len(values))))
        return ad.cosine_alignment(target, ad.flatten_gradient(grads))

    return relative_error(g, central_difference(value, values[0], h))

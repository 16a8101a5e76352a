import math

import numpy as np
import pytest

from awmeta import (
    DimensionError,
    LinearHead,
    MlpEncoder,
    UsageError,
    ValidationError,
    finite_diff_grad,
    make_rng,
    one_hot,
    softmax,
    softmax_cross_entropy,
)
from awmeta.nn import backward, encoder_backward, head_backward, sgd_step

LN4 = 1.3862943611198906
CE_HALF = 0.8132616875182228  # logits [1,0] against soft target [.5,.5]


def test_one_hot_is_one_based():
    t = one_hot(np.array([1, 3]), 3)
    assert t.tolist() == [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    with pytest.raises(ValidationError):
        one_hot(np.array([0]), 3)
    with pytest.raises(ValidationError):
        one_hot(np.array([4]), 3)


def test_softmax_rows_sum_to_one():
    rng = make_rng(0, "softmax")
    for _ in range(50):
        z = rng.normal(scale=30.0, size=(4, 6))
        p = softmax(z)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p > 0)


def test_softmax_shift_invariance():
    rng = make_rng(1, "softmax")
    z = rng.normal(size=(3, 5))
    assert np.allclose(softmax(z), softmax(z + 100.0), atol=1e-12)


def test_cross_entropy_uniform_oracle():
    # uniform logits over 4 classes: loss = ln 4 regardless of target
    z = np.zeros((2, 4))
    t = one_hot(np.array([1, 4]), 4)
    loss, dlog = softmax_cross_entropy(z, t)
    assert abs(loss - LN4) < 1e-12
    # gradient rows: (softmax - target)/B
    expect = (np.full((2, 4), 0.25) - t) / 2
    assert np.allclose(dlog, expect, atol=1e-12)


def test_cross_entropy_soft_target_oracle():
    z = np.array([[1.0, 0.0]])
    loss, _ = softmax_cross_entropy(z, np.array([[0.5, 0.5]]))
    assert abs(loss - CE_HALF) < 1e-12
    # hard target class 1: -ln(e/(e+1))
    hard, _ = softmax_cross_entropy(z, one_hot(np.array([1]), 2))
    assert abs(hard - math.log(1.0 + math.exp(-1.0))) < 1e-12


def test_cross_entropy_rejects_bad_targets():
    z = np.zeros((1, 3))
    with pytest.raises(ValidationError):
        softmax_cross_entropy(z, np.array([[0.5, 0.2, 0.2]]))  # not normalized
    with pytest.raises(DimensionError):
        softmax_cross_entropy(z, np.array([[0.5, 0.5]]))


def test_encoder_shapes_and_tanh_range():
    rng = make_rng(2, "enc")
    enc = MlpEncoder.init([4, 8, 3], rng)
    x = rng.normal(size=(5, 4))
    f = enc.forward(x)
    assert f.shape == (5, 3)
    _, cache = enc.forward_cached(x)
    assert len(cache) == 3 and cache[0] is not x or cache[0].shape == (5, 4)
    assert np.all(np.abs(cache[1]) <= 1.0)  # hidden is tanh


def test_backward_matches_finite_differences():
    rng = make_rng(3, "grad")
    for trial in range(10):
        enc = MlpEncoder.init([3, 5, 4], rng)
        head = LinearHead.init(4, 3, rng)
        x = rng.normal(size=(4, 3))
        t = one_hot(rng.integers(1, 4, size=4), 3)

        f, cache = enc.forward_cached(x)
        loss, dlog = softmax_cross_entropy(head.forward(f), t)
        grads = backward(enc, head, cache, dlog)

        params = [*enc.weights, *enc.biases, head.weight, head.bias]

        def loss_fn(ps):
            # independent forward: tanh hidden, affine last, linear head
            w0, w1, b0, b1, hw, hb = ps
            ff = np.tanh(x @ w0 + b0) @ w1 + b1
            return softmax_cross_entropy(ff @ hw + hb, t)[0]

        num = finite_diff_grad(loss_fn, params)
        flat = [grads["enc_w0"], grads["enc_w1"], grads["enc_b0"], grads["enc_b1"],
                grads["head_w"], grads["head_b"]]
        for a, n in zip(flat, num):
            assert np.max(np.abs(a - n)) < 1e-6


def test_encoder_backward_rejects_stale_cache():
    rng = make_rng(4, "stale")
    enc = MlpEncoder.init([3, 4, 2], rng)
    _, cache = enc.forward_cached(rng.normal(size=(2, 3)))
    with pytest.raises(UsageError):
        encoder_backward(enc, cache[:-1], np.zeros((2, 2)))


def test_head_backward_shapes():
    rng = make_rng(5, "hb")
    head = LinearHead.init(4, 6, rng)
    f = rng.normal(size=(3, 4))
    d = rng.normal(size=(3, 6))
    dw, db, df = head_backward(head, f, d)
    assert dw.shape == (4, 6) and db.shape == (6,) and df.shape == (3, 4)
    assert np.allclose(dw, f.T @ d)


def test_sgd_step_oracle():
    # d(p^2/2)/dp = p at lr 0.5: 1 -> 0.5 -> 0.25
    p = np.array([1.0])
    p = sgd_step(p, p.copy(), 0.5)
    assert p[0] == 0.5
    p = sgd_step(p, p.copy(), 0.5)
    assert p[0] == 0.25


def test_sgd_step_validation():
    with pytest.raises(ValidationError):
        sgd_step(np.ones(2), np.ones(2), -0.1)
    with pytest.raises(DimensionError):
        sgd_step(np.ones(2), np.ones(3), 0.1)


def test_sgd_step_nested_lists():
    params = [np.ones(2), [np.zeros(3)]]
    grads = [np.ones(2), [np.ones(3)]]
    out = sgd_step(params, grads, 1.0)
    assert np.array_equal(out[0], np.zeros(2))
    assert np.array_equal(out[1][0], -np.ones(3))

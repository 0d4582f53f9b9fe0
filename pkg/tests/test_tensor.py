"""Gradient correctness of the reverse-accumulation core."""

import numpy as np
import pytest
from scipy import signal

from handiff import tensor as T
from helpers import check_gradients

RNG = np.random.default_rng(7)


def _param(shape):
    return T.parameter(RNG.standard_normal(shape))


def test_elementwise_grads():
    a, b = _param((3, 4)), _param((3, 4))

    def loss():
        return ((a * b + a - b / (b * b + 2.0)) ** 3).sum()

    check_gradients(loss, [a, b])


def test_broadcast_grads():
    a, b = _param((2, 3, 4)), _param((4,))

    def loss():
        return ((a + b) * b).mean()

    check_gradients(loss, [a, b])


def test_unary_grads():
    x = T.parameter(RNG.uniform(0.2, 1.5, size=(5, 3)))

    def loss():
        return (T.exp(x) + T.log(x) + T.sqrt(x) + T.tanh(x) + T.sigmoid(x) + T.silu(x)).sum()

    check_gradients(loss, [x])


def test_matmul_and_reductions():
    a, b = _param((4, 6)), _param((6, 3))

    def loss():
        y = T.matmul(a, b)
        return y.mean(axis=0).sum() + (y**2).sum(axis=1).mean()

    check_gradients(loss, [a, b])


def test_reshape_transpose_concat_stack_getitem():
    a, b = _param((2, 3, 4)), _param((2, 3, 4))

    def loss():
        x = T.concat([a, b], axis=2)
        x = T.transpose(x, (2, 0, 1))
        x = x.reshape(8, 6)
        y = T.stack([x[:4], x[4:]], axis=0)
        return (y * y).sum()

    check_gradients(loss, [a, b])


def test_embedding_grad():
    table = _param((5, 4))
    ids = np.array([0, 3, 3, 1])

    def loss():
        return (T.embedding(table, ids) ** 2).sum()

    check_gradients(loss, [table])


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_conv2d_matches_scipy(stride, pad):
    x = RNG.standard_normal((2, 3, 6, 8))
    w = RNG.standard_normal((4, 3, 3, 3))
    out = T.conv2d(T.Tensor(x), T.Tensor(w), stride=stride, pad=pad).data
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    for b in range(2):
        for o in range(4):
            ref = sum(
                signal.correlate2d(xp[b, c], w[o, c], mode="valid") for c in range(3)
            )[::stride, ::stride]
            np.testing.assert_allclose(out[b, o], ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_grads(stride):
    x, w, b = _param((2, 2, 4, 6)), _param((3, 2, 3, 3)), _param((3,))

    def loss():
        return (T.conv2d(x, w, b, stride=stride, pad=1) ** 2).sum()

    check_gradients(loss, [x, w, b])


def test_pool_upsample_grads():
    x = _param((2, 3, 4, 6))

    def loss():
        return (T.upsample_nearest2(T.avg_pool2d(x)) * x).sum()

    check_gradients(loss, [x])


def test_stop_gradient_blocks_flow():
    x = _param((3,))
    y = (T.stop_gradient(x) * x).sum()
    T.backward(y)
    np.testing.assert_allclose(x.grad, x.data)


def test_shared_node_accumulates():
    x = _param((3,))
    y = x * 2.0
    z = (y + y * y).sum()
    T.backward(z)
    np.testing.assert_allclose(x.grad, 2.0 + 8.0 * x.data)


def test_eval_mode_prunes_graph():
    x = T.Tensor(np.ones((2, 2)))
    y = (x * 3.0 + 1.0).sum()
    assert not y.requires_grad
    assert y._parents == ()


def test_clip_global_norm():
    a, b = T.parameter(np.zeros(3)), T.parameter(np.zeros(4))
    a.grad = np.full(3, 2.0)
    b.grad = np.full(4, 2.0)
    norm = T.clip_global_norm([a, b], 1.0)
    assert norm == pytest.approx(np.sqrt(7 * 4.0))
    joint = np.concatenate([a.grad, b.grad])
    assert np.linalg.norm(joint) == pytest.approx(1.0)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(3)
        p = T.parameter(rng.standard_normal((4, 4)))
        opt = T.Adam([p], lr=1e-2)
        for _ in range(20):
            T.zero_grads([p])
            loss = ((p - 1.0) ** 2).sum()
            T.backward(loss)
            opt.step()
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())

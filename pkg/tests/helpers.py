"""Shared test utilities: finite-difference gradient checking."""

import numpy as np

from handiff import tensor as T


def numeric_grad(f, params, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. each param tensor."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(build_loss, params, h=1e-5, rtol=1e-5, atol=1e-7):
    """Compare reverse-accumulation gradients against finite differences.

    ``build_loss()`` must construct a fresh scalar loss Tensor from ``params``.
    Returns the worst relative error observed.
    """
    loss = build_loss()
    T.zero_grads(params)
    T.backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = numeric_grad(lambda: float(build_loss().data), params, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), np.abs(a))
        err = np.abs(a - n) / np.maximum(denom, atol / rtol)
        worst = max(worst, float(err.max()))
        np.testing.assert_allclose(a, n, rtol=rtol, atol=atol)
    return worst

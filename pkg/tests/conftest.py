"""Shared oracles and helpers.

The oracles here are deliberately independent of the library: plain-float
LSTM cells, central finite differences, and direct-formula evaluations.
They exist so expected values are computed by a second route.
"""

import math

import numpy as np
import pytest

from slrank import autodiff as ad


def finite_difference(loss_fn, params, h=1e-5):
    """Central finite differences of a scalar loss wrt a list of tensors.

    ``loss_fn`` takes no arguments and must recompute the loss from the
    current parameter values (no tape needed). Returns one array per param.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn())
            flat[i] = orig - h
            down = float(loss_fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, abs_floor=1e-7):
    """Hybrid check: |a-n| <= rel*max(|a|,|n|) + abs_floor, elementwise."""
    for a, n in zip(analytic, numeric):
        a = np.asarray(a)
        err = np.abs(a - n)
        bound = rel * np.maximum(np.abs(a), np.abs(n)) + abs_floor
        assert np.all(err <= bound), f"gradient mismatch: max err {err.max()}, bound {bound[err.argmax() if err.ndim else 0]}"


def scalar_sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm_step(x, h, c, wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg):
    """Hand-evaluated one-dimensional LSTM cell (pure floats)."""
    i = scalar_sigmoid(wi * x + ui * h + bi)
    f = scalar_sigmoid(wf * x + uf * h + bf)
    o = scalar_sigmoid(wo * x + uo * h + bo)
    g = math.tanh(wg * x + ug * h + bg)
    c_new = f * c + i * g
    h_new = o * math.tanh(c_new)
    return h_new, c_new


def scalar_lstm_params(wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg, h0=0.0, c0=0.0):
    """Pack scalar gate weights into a 1-dim LstmParams (gate order i,f,o,g)."""
    return ad.LstmParams(
        w=ad.parameter(np.array([[wi], [wf], [wo], [wg]])),
        u=ad.parameter(np.array([[ui], [uf], [uo], [ug]])),
        b=ad.parameter(np.array([bi, bf, bo, bg])),
        h0=ad.constant(np.array([h0])),
        c0=ad.constant(np.array([c0])),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

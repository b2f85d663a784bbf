"""Reverse-mode automatic differentiation on a flat tape.

The operator set is exactly what small recurrent rankers need: dense
linear algebra on float64 arrays, pointwise nonlinearities, gather/concat
plumbing, a fused LSTM scan, Adam, and variational dropout masks. Ops
record onto the currently active :class:`Tape`; with no tape active they
are plain (and cheap) forward computations, which is the inference path.

Single-threaded by design: one active tape per process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import ContractError, NumericError, ParameterError, ShapeError

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_ACTIVE_TAPE = None


class Tensor:
    """Dense float64 array, optionally tracked by the active tape.

    ``data`` exposes the flat storage; ``shape`` the logical layout.
    ``grad`` is lazily allocated during backward and matches ``value``.
    """

    __slots__ = ("value", "requires_grad", "grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def data(self):
        return self.value.reshape(-1)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def _grad_buffer(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.value.shape}, grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "backward")

    def __init__(self, out, backward):
        self.out = out
        self.backward = backward


class Tape:
    """Append-only record of op applications, in creation (= topological) order."""

    def __init__(self):
        self.nodes = []
        self.last_backward_visits = 0

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def _record(self, out, backward):
        self.nodes.append(_Node(out, backward))

    def backward(self, loss, seed=1.0):
        """Seed ``loss`` with ``seed`` and sweep the tape once, in reverse."""
        if loss.value.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        loss._accumulate(np.float64(seed))
        visits = 0
        for node in reversed(self.nodes):
            visits += 1
            g = node.out.grad
            if g is not None:
                node.backward(g)
        self.last_backward_visits = visits


def _tape():
    return _ACTIVE_TAPE


def constant(value, name=None):
    return Tensor(value, requires_grad=False, name=name)


def parameter(value, name=None):
    return Tensor(value, requires_grad=True, name=name)


def _unary(x, value, grad_fn):
    out = Tensor(value, requires_grad=x.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, x=x, grad_fn=grad_fn):
            x._accumulate(grad_fn(g))
        t._record(out, backward)
    return out


def add(a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shapes {a.value.shape} and {b.value.shape} differ")
    out = Tensor(a.value + b.value, requires_grad=a.requires_grad or b.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, a=a, b=b):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g)
        t._record(out, backward)
    return out


def sub(a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"sub: shapes {a.value.shape} and {b.value.shape} differ")
    out = Tensor(a.value - b.value, requires_grad=a.requires_grad or b.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, a=a, b=b):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(-g)
        t._record(out, backward)
    return out


def neg(x):
    return _unary(x, -x.value, lambda g: -g)


def mul(a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul: shapes {a.value.shape} and {b.value.shape} differ")
    out = Tensor(a.value * b.value, requires_grad=a.requires_grad or b.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, a=a, b=b):
            if a.requires_grad:
                a._accumulate(g * b.value)
            if b.requires_grad:
                b._accumulate(g * a.value)
        t._record(out, backward)
    return out


def scale(x, c):
    c = float(c)
    return _unary(x, x.value * c, lambda g: g * c)


def matmul(a, b):
    """2-D matrix product; backward accumulates dA = g @ B.T, dB = A.T @ g."""
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.value.shape} and {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.value.shape} x {b.value.shape}")
    out = Tensor(a.value @ b.value, requires_grad=a.requires_grad or b.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, a=a, b=b):
            if a.requires_grad:
                a._accumulate(g @ b.value.T)
            if b.requires_grad:
                b._accumulate(a.value.T @ g)
        t._record(out, backward)
    return out


def matvec(w, x):
    if w.value.ndim != 2 or x.value.ndim != 1:
        raise ShapeError(f"matvec needs matrix and vector, got {w.value.shape} and {x.value.shape}")
    if w.value.shape[1] != x.value.shape[0]:
        raise ShapeError(f"matvec: inner dimensions disagree, {w.value.shape} x {x.value.shape}")
    out = Tensor(w.value @ x.value, requires_grad=w.requires_grad or x.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, w=w, x=x):
            if w.requires_grad:
                w._accumulate(np.outer(g, x.value))
            if x.requires_grad:
                x._accumulate(w.value.T @ g)
        t._record(out, backward)
    return out


def concat(parts):
    if not parts:
        raise ParameterError("concat of zero parts")
    for p in parts:
        if p.value.ndim != 1:
            raise ShapeError(f"concat is 1-D only, got shape {p.value.shape}")
    out = Tensor(np.concatenate([p.value for p in parts]),
                 requires_grad=any(p.requires_grad for p in parts))
    t = _tape()
    if t is not None and out.requires_grad:
        sizes = [p.value.shape[0] for p in parts]
        def backward(g, parts=tuple(parts), sizes=tuple(sizes)):
            off = 0
            for p, n in zip(parts, sizes):
                if p.requires_grad:
                    p._accumulate(g[off:off + n])
                off += n
        t._record(out, backward)
    return out


def narrow(x, start, length):
    """Contiguous 1-D slice x[start:start+length]."""
    if x.value.ndim != 1:
        raise ShapeError(f"narrow is 1-D only, got shape {x.value.shape}")
    if start < 0 or length < 0 or start + length > x.value.shape[0]:
        raise ParameterError(f"narrow [{start}:{start + length}] out of range for length {x.value.shape[0]}")
    out = Tensor(x.value[start:start + length].copy(), requires_grad=x.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, x=x, start=start, length=length):
            x._grad_buffer()[start:start + length] += g
        t._record(out, backward)
    return out


def row(x, i):
    if x.value.ndim != 2:
        raise ShapeError(f"row needs a 2-D tensor, got shape {x.value.shape}")
    if not 0 <= i < x.value.shape[0]:
        raise ParameterError(f"row {i} out of range for {x.value.shape[0]} rows")
    out = Tensor(x.value[i].copy(), requires_grad=x.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, x=x, i=i):
            x._grad_buffer()[i] += g
        t._record(out, backward)
    return out


def rows(table, ids):
    """Gather rows of a 2-D table; repeated ids accumulate on backward."""
    if table.value.ndim != 2:
        raise ShapeError(f"rows needs a 2-D table, got shape {table.value.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ParameterError("rows needs a non-empty 1-D id list")
    if idx.min() < 0 or idx.max() >= table.value.shape[0]:
        raise ParameterError(f"row id out of range for table with {table.value.shape[0]} rows")
    out = Tensor(table.value[idx], requires_grad=table.requires_grad)
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, table=table, idx=idx):
            np.add.at(table._grad_buffer(), idx, g)
        t._record(out, backward)
    return out


def stack(parts):
    """Stack equal-length 1-D tensors into a (T, d) tensor."""
    if not parts:
        raise ParameterError("stack of zero parts")
    d = parts[0].value.shape
    for p in parts:
        if p.value.shape != d or p.value.ndim != 1:
            raise ShapeError("stack needs equal-length 1-D tensors")
    out = Tensor(np.stack([p.value for p in parts]),
                 requires_grad=any(p.requires_grad for p in parts))
    t = _tape()
    if t is not None and out.requires_grad:
        def backward(g, parts=tuple(parts)):
            for i, p in enumerate(parts):
                if p.requires_grad:
                    p._accumulate(g[i])
        t._record(out, backward)
    return out


def sigmoid(x):
    s = _sigmoid(x.value)
    return _unary(x, s, lambda g, s=s: g * s * (1.0 - s))


def tanh(x):
    th = np.tanh(x.value)
    return _unary(x, th, lambda g, th=th: g * (1.0 - th * th))


def selu(x):
    v = x.value
    y = np.where(v > 0, SELU_LAMBDA * v, SELU_LAMBDA * SELU_ALPHA * np.expm1(v))
    def grad_fn(g, v=v):
        return g * np.where(v > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(v))
    return _unary(x, y, grad_fn)


def softmax(x):
    """Stable softmax over a 1-D tensor; output is a probability vector."""
    if x.value.ndim != 1 or x.value.shape[0] < 1:
        raise ShapeError(f"softmax needs a non-empty 1-D tensor, got shape {x.value.shape}")
    if not np.all(np.isfinite(x.value)):
        raise NumericError("softmax input contains NaN or Inf")
    z = x.value - x.value.max()
    e = np.exp(z)
    y = e / e.sum()
    def grad_fn(g, y=y):
        return y * (g - np.dot(g, y))
    return _unary(x, y, grad_fn)


def clamped_log(x, eps=1e-12):
    """log(max(x, eps)); gradient is zero where the clamp is active."""
    v = np.maximum(x.value, eps)
    def grad_fn(g, v=v, active=x.value > eps):
        return np.where(active, g / v, 0.0)
    return _unary(x, np.log(v), grad_fn)


def weighted_sum(x, weights):
    """Scalar sum(weights * x) with a constant weight array."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.value.shape:
        raise ShapeError(f"weighted_sum: weights shape {w.shape} != tensor shape {x.value.shape}")
    return _unary(x, np.float64((w * x.value).sum()), lambda g, w=w: g * w)


def total(x):
    return _unary(x, np.float64(x.value.sum()), lambda g, shp=x.value.shape: np.full(shp, g))


# ---------------------------------------------------------------------------
# LSTM machinery.  Fused gate parameters, rows ordered [input, forget,
# output, candidate]; initial states travel with the parameter bundle.
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """One direction of an LSTM: fused weights plus fixed initial states."""

    w: Tensor   # (4H, d) input weights
    u: Tensor   # (4H, H) recurrent weights
    b: Tensor   # (4H,)  gate biases
    h0: Tensor  # (H,)   initial hidden state, fixed random constant
    c0: Tensor  # (H,)   initial cell state, fixed random constant

    @property
    def input_dim(self):
        return self.w.value.shape[1]

    @property
    def state_dim(self):
        return self.u.value.shape[1]

    def trainable(self):
        return [self.w, self.u, self.b]

    def named(self, prefix):
        return {f"{prefix}.w": self.w, f"{prefix}.u": self.u, f"{prefix}.b": self.b,
                f"{prefix}.h0": self.h0, f"{prefix}.c0": self.c0}


def glorot(rng, fan_out, fan_in):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_lstm(rng, input_dim, state_dim, name):
    """Glorot weights, zero biases, small random initial states."""
    h = state_dim
    return LstmParams(
        w=parameter(glorot(rng, 4 * h, input_dim), f"{name}.w"),
        u=parameter(glorot(rng, 4 * h, h), f"{name}.u"),
        b=parameter(np.zeros(4 * h), f"{name}.b"),
        h0=constant(rng.normal(0.0, 0.1, size=h), f"{name}.h0"),
        c0=constant(rng.normal(0.0, 0.1, size=h), f"{name}.c0"),
    )


def lstm_step(x, h_prev, c_prev, params):
    """One LSTM cell update, composed from primitive ops.

    Returns (h, c). Definitional reference for the fused scan below.
    """
    hdim = params.state_dim
    if x.value.shape != (params.input_dim,):
        raise ShapeError(f"lstm_step: input shape {x.value.shape}, expected ({params.input_dim},)")
    if h_prev.value.shape != (hdim,) or c_prev.value.shape != (hdim,):
        raise ShapeError(f"lstm_step: state shapes {h_prev.value.shape}/{c_prev.value.shape}, expected ({hdim},)")
    pre = add(add(matvec(params.w, x), matvec(params.u, h_prev)), params.b)
    i = sigmoid(narrow(pre, 0, hdim))
    f = sigmoid(narrow(pre, hdim, hdim))
    o = sigmoid(narrow(pre, 2 * hdim, hdim))
    g = tanh(narrow(pre, 3 * hdim, hdim))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_sequence(xs, params, reverse=False):
    """Run an LSTM over xs (T, d), returning all hidden states as (T, H).

    Forward scan l-to-r, or r-to-l when ``reverse`` (output row t is then
    the state after consuming xs[t] in the reversed pass, so row 0 holds
    the reverse-final state). Fused: one tape node, hand-rolled BPTT.
    Equivalent to iterating :func:`lstm_step`.
    """
    if xs.value.ndim != 2:
        raise ShapeError(f"lstm_sequence needs (T, d) inputs, got shape {xs.value.shape}")
    T, d = xs.value.shape
    if T < 1:
        raise ContractError("lstm_sequence over an empty sequence")
    if d != params.input_dim:
        raise ShapeError(f"lstm_sequence: input dim {d} != params dim {params.input_dim}")
    hdim = params.state_dim
    w, u, b = params.w.value, params.u.value, params.b.value
    order = range(T - 1, -1, -1) if reverse else range(T)

    xp = xs.value @ w.T + b  # (T, 4H) input projections, one gemm
    hs = np.empty((T, hdim))
    cache = [None] * T
    h, c = params.h0.value, params.c0.value
    for t in order:
        pre = xp[t] + u @ h
        gates = _sigmoid(pre[:3 * hdim])  # i, f, o rows are contiguous
        i = gates[:hdim]
        f = gates[hdim:2 * hdim]
        o = gates[2 * hdim:]
        g = np.tanh(pre[3 * hdim:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache[t] = (i, f, o, g, tc, c, h)
        h = o * tc
        c = c_new
        hs[t] = h

    needs = params.w.requires_grad or params.u.requires_grad or params.b.requires_grad \
        or xs.requires_grad or params.h0.requires_grad or params.c0.requires_grad
    out = Tensor(hs, requires_grad=needs)
    t_ = _tape()
    if t_ is not None and needs:
        def backward(grad_hs, xs=xs, params=params, cache=cache, order=tuple(order)):
            wv, uv = params.w.value, params.u.value
            dpre_all = np.empty((T, 4 * hdim))
            dh = np.zeros(hdim)
            dc = np.zeros(hdim)
            for t in reversed(order):
                i, f, o, g, tc, c_prev, h_prev = cache[t]
                dh_total = grad_hs[t] + dh
                do = dh_total * tc
                dc_total = dc + dh_total * o * (1.0 - tc * tc)
                dpre = dpre_all[t]
                dpre[:hdim] = dc_total * g * i * (1.0 - i)
                dpre[hdim:2 * hdim] = dc_total * c_prev * f * (1.0 - f)
                dpre[2 * hdim:3 * hdim] = do * o * (1.0 - o)
                dpre[3 * hdim:] = dc_total * i * (1.0 - g * g)
                dh = uv.T @ dpre
                dc = dc_total * f
            hprev = np.stack([cache[t][6] for t in range(T)])
            if params.w.requires_grad:
                params.w._accumulate(dpre_all.T @ xs.value)
            if params.u.requires_grad:
                params.u._accumulate(dpre_all.T @ hprev)
            if params.b.requires_grad:
                params.b._accumulate(dpre_all.sum(axis=0))
            if xs.requires_grad:
                xs._accumulate(dpre_all @ wv)
            if params.h0.requires_grad:
                params.h0._accumulate(dh)
            if params.c0.requires_grad:
                params.c0._accumulate(dc)
        t_._record(out, backward)
    return out


def bilstm_finals(xs, fwd, bwd):
    """Final forward state concatenated with final backward state, (2H,)."""
    hs_f = lstm_sequence(xs, fwd)
    hs_b = lstm_sequence(xs, bwd, reverse=True)
    T = xs.value.shape[0]
    return concat([row(hs_f, T - 1), row(hs_b, 0)])


def bilstm_outputs(xs, fwd, bwd):
    """Per-position [forward_t | backward_t] outputs as a list of (2H,) tensors."""
    hs_f = lstm_sequence(xs, fwd)
    hs_b = lstm_sequence(xs, bwd, reverse=True)
    T = xs.value.shape[0]
    return [concat([row(hs_f, t), row(hs_b, t)]) for t in range(T)]


# ---------------------------------------------------------------------------
# Optimizer and regularization.
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam bound to a fixed parameter list."""

    params: list
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"learning rate must be positive, got {self.lr}")
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]


def adam_step(state):
    """Apply one Adam update to every bound parameter, in place."""
    for p in state.params:
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {p.name or '<unnamed>'} has no gradient")
    state.step += 1
    b1t = 1.0 - state.beta1 ** state.step
    b2t = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(state.params, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)


def zero_grads(params):
    for p in params:
        p.grad = None


def variational_dropout_mask(shape, rate, rng):
    """Inverted-scale Bernoulli mask, drawn once and reused across timesteps.

    The caller applies the same mask at every step of a sequence; that reuse
    is what makes the dropout variational rather than per-step.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return constant(np.ones(shape))
    keep = 1.0 - rate
    mask = (rng.random(shape) < keep).astype(np.float64) / keep
    return constant(mask)

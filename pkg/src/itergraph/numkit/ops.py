"""Primitive differentiable operations on 2-D tensors.

Each primitive computes its forward value eagerly and, when a tape is active
and some input requires a gradient, records a closure producing the input
adjoints.  Branching primitives (relu, threshold, floor) also record the
boolean mask they used so gradient checks can detect kink crossings.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import ContractError, LowRank, Tensor, current_tape


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _emit(values: np.ndarray, inputs: tuple[Tensor, ...], backward, kink=None) -> Tensor:
    tape = current_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(values, requires_grad=track)
    if track:
        tape.record(out, inputs, backward, kink)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _thin(k: int, shape: tuple[int, int]) -> bool:
    """Whether a rank-k gradient for a matrix of ``shape`` is worth keeping factored."""
    return 4 * k <= min(shape)


def _low_rank_ok(fn):
    fn.accepts_low_rank = True
    return fn


def _scaled(g, c: float):
    return g.scaled(c) if isinstance(g, LowRank) else g * c


def _dense(g) -> np.ndarray:
    return g.dense() if isinstance(g, LowRank) else g


def _check_broadcast(a: Tensor, b: Tensor, what: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ContractError(f"{what}: shapes {a.shape} and {b.shape} do not broadcast")


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ContractError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = LowRank(g, bv) if _thin(bv.shape[1], av.shape) else g @ bv.T
        if b.requires_grad:
            gb = av.T @ g
        return ga, gb

    return _emit(av @ bv, (a, b), back)


def propagate(c, m) -> Tensor:
    """c @ m for a constant (dense or scipy.sparse) matrix ``c``; only m is differentiable."""
    m = as_tensor(m)
    if c.shape[1] != m.rows:
        raise ContractError(f"propagate: inner dimensions differ, {c.shape} @ {m.shape}")
    ct = c.T
    out = np.asarray(c @ m.values)
    return _emit(out, (m,), lambda g: (np.asarray(ct @ g),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _emit(np.ascontiguousarray(a.values.T), (a,), lambda g: (g.T,))


def gram(a) -> Tensor:
    """a @ a.T, bit-exactly symmetric."""
    a = as_tensor(a)
    av = np.ascontiguousarray(a.values)
    # numpy hands a @ a.T to a symmetric rank-k update that mirrors one triangle
    out = av @ av.T

    def back(g):
        return ((g + g.T) @ av,)

    return _emit(out, (a,), back)


def trace_quadratic(x, m) -> Tensor:
    """tr(x.T @ m @ x) as a 1x1 tensor."""
    x, m = as_tensor(x), as_tensor(m)
    if m.rows != m.cols or m.cols != x.rows:
        raise ContractError(f"trace_quadratic: need square m matching x rows, got {m.shape}, {x.shape}")
    xv, mv = x.values, m.values
    mx = mv @ xv
    val = np.array([[np.sum(xv * mx)]])

    def back(g):
        s = g[0, 0]
        gx = s * (mx + mv.T @ xv) if x.requires_grad else None
        gm = None
        if m.requires_grad:
            gm = LowRank(s * xv, xv) if _thin(xv.shape[1], mv.shape) else s * (xv @ xv.T)
        return gx, gm

    return _emit(val, (x, m), back)


def diag(v) -> Tensor:
    """n x 1 column to n x n diagonal matrix."""
    v = as_tensor(v)
    if v.cols != 1:
        raise ContractError(f"diag expects a column vector, got {v.shape}")
    return _emit(np.diag(v.values[:, 0]), (v,), lambda g: (np.diag(g).reshape(-1, 1).copy(),))


def hstack(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    widths = [p.cols for p in parts]
    offsets = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit(np.hstack([p.values for p in parts]), parts, back)


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting between 2-D shapes)

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    """Hadamard product with broadcasting."""
    if not isinstance(b, Tensor) and np.isscalar(b):
        return scale(a, float(b))
    if not isinstance(a, Tensor) and np.isscalar(a):
        return scale(b, float(a))
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.values, b.values

    def back(g):
        ga = _unbroadcast(g * bv, av.shape) if a.requires_grad else None
        gb = _unbroadcast(g * av, bv.shape) if b.requires_grad else None
        return ga, gb

    return _emit(av * bv, (a, b), back)


def div(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        return scale(a, 1.0 / float(b))
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    av, bv = a.values, b.values
    out = av / bv

    def back(g):
        ga = _unbroadcast(g / bv, av.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bv, bv.shape) if b.requires_grad else None
        return ga, gb

    return _emit(out, (a, b), back)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit(a.values * c, (a,), _low_rank_ok(lambda g: (_scaled(g, c),)))


def add_scalar(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _emit(a.values + float(c), (a,), lambda g: (g,))


def lerp(a, b, w: float) -> Tensor:
    """w * a + (1 - w) * b in a single pass."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ContractError(f"lerp: shapes differ, {a.shape} vs {b.shape}")
    w = float(w)
    out = a.values * w
    if w != 1.0:
        out += (1.0 - w) * b.values

    @_low_rank_ok
    def back(g):
        return (_scaled(g, w) if a.requires_grad else None,
                _scaled(g, 1.0 - w) if b.requires_grad else None)

    return _emit(out, (a, b), back)


def combine(terms: Sequence[tuple[float, Tensor]]) -> Tensor:
    """Weighted sum of same-shape tensors, sum_i c_i * t_i."""
    coefs = [float(c) for c, _ in terms]
    tensors = tuple(as_tensor(t) for _, t in terms)
    out = np.zeros_like(tensors[0].values)
    for c, t in zip(coefs, tensors):
        if t.shape != out.shape:
            raise ContractError("combine: all terms must share a shape")
        out += c * t.values
    return _emit(out, tensors, _low_rank_ok(lambda g: tuple(_scaled(g, c) for c in coefs)))


# ---------------------------------------------------------------------------
# reductions

def sum(a, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        val = np.array([[a.values.sum()]])
        return _emit(val, (a,), lambda g: (np.full(shape, g[0, 0]),))
    if axis not in (0, 1):
        raise ContractError(f"axis must be None, 0 or 1, got {axis}")
    val = a.values.sum(axis=axis, keepdims=True)

    def back(g):
        # the broadcast adjoint is rank one
        if axis == 1 and _thin(1, shape):
            return (LowRank(g, np.ones((shape[1], 1))),)
        if axis == 0 and _thin(1, shape):
            return (LowRank(np.ones((shape[0], 1)), g.T),)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(val, (a,), back)


def row_sum(a) -> Tensor:
    return sum(a, axis=1)


def mean(a) -> Tensor:
    a = as_tensor(a)
    return scale(sum(a), 1.0 / a.values.size)


def sum_squares(a) -> Tensor:
    """Squared Frobenius norm as a 1x1 tensor."""
    a = as_tensor(a)
    av = a.values
    val = np.array([[np.vdot(av, av)]])
    return _emit(val, (a,), lambda g: (2.0 * g[0, 0] * av,))


# ---------------------------------------------------------------------------
# elementwise nonlinearities

def square(a) -> Tensor:
    a = as_tensor(a)
    av = a.values
    return _emit(av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.values)
    return _emit(out, (a,), lambda g: (g / (2.0 * out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.values
    return _emit(np.log(av), (a,), lambda g: (g / av,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)
    return _emit(out, (a,), lambda g: (g * out,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.values > 0.0
    return _emit(a.values * mask, (a,), lambda g: (g * mask,), kink=mask)


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor); the subgradient is 0 at and below the floor."""
    a = as_tensor(a)
    mask = a.values > floor
    out = np.where(mask, a.values, floor)
    return _emit(out, (a,), lambda g: (g * mask,), kink=mask)


def threshold(a, eps: float) -> Tensor:
    """Keep entries strictly greater than eps, zero the rest."""
    a = as_tensor(a)
    mask = a.values > eps

    @_low_rank_ok
    def back(g):
        if isinstance(g, LowRank):
            g = g.dense()
            g *= mask
            return (g,)
        return (g * mask,)

    return _emit(a.values * mask, (a,), back, kink=mask)


def row_normalize(a, floor: float = 0.0) -> Tensor:
    """Divide each row by its sum; rows whose sum is <= floor stay zero."""
    a = as_tensor(a)
    av = a.values
    s = av.sum(axis=1, keepdims=True)
    live = s > floor
    inv = np.divide(1.0, s, out=np.zeros_like(s), where=live)
    out = av * inv

    def back(g):
        # d out_ij / d a_ik = (delta_jk - out_ij) / s_i on live rows
        inner = np.sum(g * out, axis=1, keepdims=True)
        return ((g - inner) * inv,)

    return _emit(out, (a,), back, kink=live)


def safe_reciprocal(a, floor: float = 0.0) -> Tensor:
    """1 / a where a > floor, 0 elsewhere."""
    a = as_tensor(a)
    live = a.values > floor
    out = np.divide(1.0, a.values, out=np.zeros_like(a.values), where=live)
    return _emit(out, (a,), lambda g: (-g * out * out,), kink=live)


def softmax(a) -> Tensor:
    """Row-wise softmax."""
    a = as_tensor(a)
    z = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)

    return _emit(p, (a,), back)


def pick(a, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather a[rows[i], cols[i]] into a k x 1 column."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    shape = a.shape

    def back(g):
        ga = np.zeros(shape)
        np.add.at(ga, (rows, cols), g[:, 0])
        return (ga,)

    return _emit(a.values[rows, cols].reshape(-1, 1), (a,), back)


def take_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    shape = a.shape

    def back(g):
        ga = np.zeros(shape)
        np.add.at(ga, idx, g)
        return (ga,)

    return _emit(a.values[idx], (a,), back)


def softmax_cross_entropy(logits, labels: np.ndarray, rows: np.ndarray) -> Tensor:
    """Mean over ``rows`` of -log softmax(logits)[row, label[row]], fused."""
    logits = as_tensor(logits)
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise ContractError("cross entropy over an empty node set")
    lab = np.asarray(labels, dtype=np.intp)[rows]
    z = logits.values[rows]
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(rows.size), lab]
    val = np.array([[nll.mean()]])
    shape = logits.shape

    def back(g):
        p = np.exp(z - logsum[:, None])
        p[np.arange(rows.size), lab] -= 1.0
        ga = np.zeros(shape)
        ga[rows] = p * (g[0, 0] / rows.size)
        return (ga,)

    return _emit(val, (logits,), back)


def dropout(a, rate: float, rng: Optional[np.random.Generator], training: bool = True) -> Tensor:
    """Inverted dropout; the sampled mask is reused by the backward pass."""
    a = as_tensor(a)
    if not training or rate <= 0.0:
        return a
    if rate >= 1.0:
        raise ContractError(f"dropout rate must be < 1, got {rate}")
    if rng is None:
        raise ContractError("dropout in training mode needs a seeded generator")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _emit(a.values * keep, (a,), lambda g: (g * keep,))

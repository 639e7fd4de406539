"""Two-layer GCN and the adjacency mixing rules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .numkit import ContractError, Tensor, ops


@dataclass
class GcnParams:
    w1: Tensor
    w2: Tensor
    dropout: float = 0.5       # after the first layer at initialisation
    iter_dropout: float = 0.5  # after the first layer inside refinement iterations


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_gcn(d_in: int, hidden: int, classes: int, rng: np.random.Generator,
             dropout: float = 0.5, iter_dropout: float = 0.5) -> GcnParams:
    w1 = Tensor(glorot(d_in, hidden, rng), requires_grad=True, name="w1")
    w2 = Tensor(glorot(hidden, classes, rng), requires_grad=True, name="w2")
    return GcnParams(w1, w2, dropout, iter_dropout)


def normalize_initial(a0: np.ndarray) -> np.ndarray:
    """D^-1/2 (A0 + I) D^-1/2 with D the degrees after adding self-loops."""
    a0 = np.asarray(a0, dtype=np.float64)
    n = a0.shape[0]
    if a0.shape != (n, n):
        raise ContractError(f"initial adjacency must be square, got {a0.shape}")
    if np.any(a0 < 0):
        raise ContractError("initial adjacency has negative entries")
    a = a0 + np.eye(n)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return d[:, None] * a * d[None, :]


class FixedOperator:
    """Fixed propagation matrix (dense or scipy.sparse); no gradient.

    Wrap L0 once per forward pass so repeated products with the same
    right-hand side are computed once.
    """

    def __init__(self, c):
        self.c = c.values if isinstance(c, Tensor) else c
        self._memo: dict[int, tuple[Tensor, Tensor]] = {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    def apply(self, m: Tensor) -> Tensor:
        hit = self._memo.get(id(m))
        if hit is None or hit[0] is not m:
            hit = self._memo[id(m)] = (m, ops.propagate(self.c, m))
        return hit[1]

    def dense_tensor(self) -> Tensor:
        c = self.c.toarray() if sp.issparse(self.c) else self.c
        return Tensor(c)


class _RowNormalized:
    """rownorm(A) kept as A plus inverse row sums, so A is never rescaled densely."""

    def __init__(self, a: Tensor):
        self.a = a
        self.inv = ops.safe_reciprocal(ops.row_sum(a))
        self._memo: dict[int, tuple[Tensor, Tensor]] = {}

    def apply(self, m: Tensor) -> Tensor:
        hit = self._memo.get(id(m))
        if hit is None or hit[0] is not m:
            hit = self._memo[id(m)] = (m, ops.matmul(self.a, m) * self.inv)
        return hit[1]

    def dense_tensor(self) -> Tensor:
        return self.a * self.inv


class _Dense:
    def __init__(self, a: Tensor):
        self.a = a

    def apply(self, m: Tensor) -> Tensor:
        return ops.matmul(self.a, m)

    def dense_tensor(self) -> Tensor:
        return self.a


class MixedAdjacency:
    """Weighted sum of propagation operators, sum_i c_i P_i, applied lazily.

    ``adj @ M`` evaluates each c_i P_i M on thin matrices instead of forming
    the n x n mix; products with the same M are computed once per operator.
    ``dense()`` builds the matrix when it is needed explicitly.
    """

    def __init__(self, terms: list[tuple[float, object]], n: int):
        merged: dict[int, list] = {}
        for c, op in terms:
            if c == 0.0:
                continue
            if id(op) in merged:
                merged[id(op)][0] += c
            else:
                merged[id(op)] = [c, op]
        self.terms = [(c, op) for c, op in merged.values()]
        self.shape = (n, n)

    @property
    def rows(self) -> int:
        return self.shape[0]

    def __matmul__(self, m: Tensor) -> Tensor:
        if m.rows != self.shape[1]:
            raise ContractError(f"adjacency {self.shape} cannot propagate {m.shape}")
        if not self.terms:
            return Tensor(np.zeros(m.shape))
        return ops.combine([(c, op.apply(m)) for c, op in self.terms])

    def dense(self) -> Tensor:
        if not self.terms:
            return Tensor(np.zeros(self.shape))
        return ops.combine([(c, op.dense_tensor()) for c, op in self.terms])

    @property
    def values(self) -> np.ndarray:
        return self.dense().values


def _as_operator(a) -> MixedAdjacency:
    if isinstance(a, MixedAdjacency):
        return a
    return MixedAdjacency([(1.0, _Dense(a))], a.rows)


def mix_with_initial(a: Tensor, l0, lam: float) -> MixedAdjacency:
    """lam * L0 + (1 - lam) * rownorm(A); all-zero rows of A stay zero."""
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda must lie in [0, 1], got {lam}")
    if l0.shape != a.shape:
        raise ContractError(f"L0 {l0.shape} and A {a.shape} differ in shape")
    const = l0 if isinstance(l0, FixedOperator) else FixedOperator(l0)
    terms = [(lam, const)]
    if lam < 1.0:
        terms.append((1.0 - lam, _RowNormalized(a)))
    return MixedAdjacency(terms, a.rows)


def mix_iterations(a_t, a_init, eta: float):
    """eta * (current mixed adjacency) + (1 - eta) * (initial mixed adjacency)."""
    if not 0.0 <= eta <= 1.0:
        raise ContractError(f"eta must lie in [0, 1], got {eta}")
    if isinstance(a_t, Tensor) and isinstance(a_init, Tensor):
        return ops.lerp(a_t, a_init, eta)
    a_t, a_init = _as_operator(a_t), _as_operator(a_init)
    terms = [(eta * c, op) for c, op in a_t.terms] + [((1.0 - eta) * c, op) for c, op in a_init.terms]
    return MixedAdjacency(terms, a_t.rows)


class GcnOutput(NamedTuple):
    z: Tensor       # hidden embeddings relu(adj X W1), before dropout
    probs: Tensor   # row-wise softmax
    logits: Tensor


def _require_finite(t: Tensor, where: str) -> None:
    if not np.all(np.isfinite(t.values)):
        raise FloatingPointError(f"non-finite values in {where}")


def gcn_forward(adj: Tensor | MixedAdjacency, x, params: GcnParams, training: bool = False,
                rng: Optional[np.random.Generator] = None,
                dropout: Optional[float] = None, xw1: Optional[Tensor] = None) -> GcnOutput:
    """Z = relu(adj X W1); probs = softmax(adj dropout(Z) W2).

    Dropout only regularises the input of the output layer; the returned
    embedding Z is the clean one, which is what the next graph is built from.

    ``dropout`` overrides ``params.dropout`` (the engine passes the iteration
    rate inside refinement).  Dropout is only active when ``training``.
    ``xw1`` may carry a precomputed X W1 shared across calls.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    n = adj.shape[0]
    if adj.shape != (n, n) or x.rows != n:
        raise ContractError(f"adjacency {adj.shape} does not match features {x.shape}")
    if x.cols != params.w1.rows:
        raise ContractError(f"features have {x.cols} columns, W1 expects {params.w1.rows}")
    rate = params.dropout if dropout is None else dropout
    h = ops.relu(adj @ (x @ params.w1 if xw1 is None else xw1))
    _require_finite(h, "first GCN layer")
    logits = adj @ (ops.dropout(h, rate, rng, training) @ params.w2)
    _require_finite(logits, "output GCN layer")
    return GcnOutput(h, ops.softmax(logits), logits)


def _rows(mask: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(np.asarray(mask))
    if rows.size == 0:
        raise ContractError("empty node mask")
    return rows


def prediction_loss(probs: Tensor, y: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean cross-entropy of class probabilities over the masked nodes."""
    rows = _rows(mask)
    picked = ops.pick(probs, rows, np.asarray(y)[rows])
    return ops.scale(ops.mean(ops.log(picked)), -1.0)


def logits_loss(logits: Tensor, y: np.ndarray, mask: np.ndarray) -> Tensor:
    """Same value as ``prediction_loss(softmax(logits), ...)``, computed stably."""
    return ops.softmax_cross_entropy(logits, y, _rows(mask))

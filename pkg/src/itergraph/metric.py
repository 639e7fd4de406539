"""Learnable node similarity, epsilon-neighbourhood sparsification and kNN graphs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .numkit import ContractError, Tensor, ops

logger = logging.getLogger(__name__)

# cosine denominators are floored at this norm; a zero vector is similar to nothing
NORM_FLOOR = 1e-8


@dataclass
class MetricParams:
    """Per-head feature weights (row k weights head k) and the sparsity threshold."""

    weights: Tensor
    epsilon: float = 0.0

    def __post_init__(self):
        if self.weights.rows < 1:
            raise ContractError("a metric needs at least one head")
        if self.epsilon < 0:
            raise ContractError(f"epsilon must be non-negative, got {self.epsilon}")

    @property
    def heads(self) -> int:
        return self.weights.rows

    @property
    def dim(self) -> int:
        return self.weights.cols


def init_metric(dim: int, heads: int, epsilon: float, rng: np.random.Generator,
                name: str = "metric") -> MetricParams:
    w = Tensor(rng.uniform(0.0, 1.0, size=(heads, dim)), requires_grad=True, name=name)
    return MetricParams(w, epsilon)


def _unit_rows(u: Tensor) -> Tensor:
    sq = ops.row_sum(ops.square(u))
    norm = ops.sqrt(ops.clamp_min(sq, NORM_FLOOR ** 2))
    return u / norm


def multi_head_cosine(v: Tensor, params: MetricParams) -> Tensor:
    """Mean over heads of cos(w_k * v_i, w_k * v_j), an n x n symmetric matrix.

    Heads are stacked side by side and scaled by 1/sqrt(m), so the average of
    the m cosine matrices is a single Gram product.
    """
    if v.cols != params.dim:
        raise ContractError(f"node vectors have dim {v.cols}, metric expects {params.dim}")
    m = params.heads
    w = params.weights
    heads = []
    for k in range(m):
        wk = ops.take_rows(w, [k]) if m > 1 else w
        heads.append(_unit_rows(v * wk))
    stacked = heads[0] if m == 1 else ops.hstack(heads)
    if m > 1:
        stacked = ops.scale(stacked, 1.0 / math.sqrt(m))
    return ops.gram(stacked)


def epsilon_sparsify(s: Tensor, epsilon: float) -> Tensor:
    """Zero every similarity not strictly above ``epsilon``."""
    if epsilon < 0:
        raise ContractError(f"epsilon must be non-negative, got {epsilon}")
    return ops.threshold(s, epsilon)


def learn_adjacency(v: Tensor, params: MetricParams) -> Tensor:
    return epsilon_sparsify(multi_head_cosine(v, params), params.epsilon)


def cosine_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), NORM_FLOOR)
    u = x / norms
    return u @ u.T


def knn_graph(x: np.ndarray, k: int) -> np.ndarray:
    """Binary symmetric kNN graph under cosine similarity.

    Each node links to its k most similar other nodes (ties go to the lower
    index); the directed sets are symmetrised by union.  No self-loops.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    if n < 2:
        return np.zeros((n, n))
    if k >= n:
        logger.warning("k=%d >= n=%d, clamping to %d", k, n, n - 1)
        k = n - 1
    sim = cosine_matrix(x)
    np.fill_diagonal(sim, -np.inf)
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    a = np.zeros((n, n))
    a[np.repeat(np.arange(n), k), order.reshape(-1)] = 1.0
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0.0)
    return a

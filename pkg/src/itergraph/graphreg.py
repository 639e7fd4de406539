"""Smoothness, connectivity and sparsity penalties on a learned adjacency."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .numkit import ContractError, Tensor, ops

logger = logging.getLogger(__name__)

DEGREE_FLOOR = 1e-12


@dataclass(frozen=True)
class GraphRegWeights:
    alpha: float = 0.0  # smoothness
    beta: float = 0.0   # connectivity (log barrier on degrees)
    gamma: float = 0.0  # sparsity (Frobenius)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative, got {getattr(self, name)}")


def _as_const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _symmetric(a: np.ndarray, atol: float = 1e-12, probe: int = 64) -> bool:
    # small matrices are compared in full; large ones on a fixed spread of
    # rows against the matching columns, which catches any directed
    # construction while keeping the check O(n) per row probed
    n = a.shape[0]
    if n <= 4 * probe:
        return bool(np.allclose(a, a.T, rtol=0.0, atol=atol))
    rows = np.linspace(0, n - 1, probe).astype(int)
    return bool(np.allclose(a[rows], a[:, rows].T, rtol=0.0, atol=atol))


def dirichlet_energy(a: Tensor, x) -> Tensor:
    """(1/n^2) tr(X^T (D - A) X) with D the diagonal degree matrix.

    Equal to (1/2n^2) sum_ij A_ij ||x_i - x_j||^2 for symmetric A.  The D term
    is evaluated as sum_i deg_i ||x_i||^2, which avoids materialising D.
    """
    x = _as_const(x)
    n = a.rows
    if a.shape != (n, n) or x.rows != n:
        raise ContractError(f"dirichlet_energy: A {a.shape} and X {x.shape} disagree")
    if not _symmetric(a.values):
        raise ContractError("dirichlet_energy needs a symmetric adjacency")
    deg = ops.row_sum(a)
    sqn = ops.row_sum(ops.square(x))
    t_degree = ops.sum(deg * sqn)
    t_adj = ops.trace_quadratic(x, a)
    return ops.scale(t_degree - t_adj, 1.0 / (n * n))


def connectivity_sparsity(a: Tensor, beta: float, gamma: float) -> Tensor:
    """-(beta/n) 1^T log(A 1) + (gamma/n^2) ||A||_F^2, degrees floored before the log."""
    n = a.rows
    terms = []
    if beta:
        deg = ops.row_sum(a)
        low = int(np.count_nonzero(deg.values <= DEGREE_FLOOR))
        if low:
            logger.debug("log barrier: %d of %d degrees floored at %g", low, n, DEGREE_FLOOR)
        logdeg = ops.log(ops.clamp_min(deg, DEGREE_FLOOR))
        terms.append(ops.scale(ops.sum(logdeg), -beta / n))
    if gamma:
        terms.append(ops.scale(ops.sum_squares(a), gamma / (n * n)))
    if not terms:
        return Tensor(0.0)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def graph_reg_loss(a: Tensor, x, weights: GraphRegWeights) -> Tensor:
    out = connectivity_sparsity(a, weights.beta, weights.gamma)
    if weights.alpha:
        out = out + ops.scale(dirichlet_energy(a, x), weights.alpha)
    return out

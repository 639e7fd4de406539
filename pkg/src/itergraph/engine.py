"""Joint graph + GCN training with iterative graph refinement and dynamic stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .config import RunConfig
from .data import Dataset
from .gnn import FixedOperator, GcnParams, gcn_forward, init_gcn, logits_loss, mix_iterations, mix_with_initial, normalize_initial
from .graphreg import GraphRegWeights, graph_reg_loss
from .metric import MetricParams, init_metric, knn_graph, learn_adjacency
from .numkit import AdamState, ContractError, Tape, Tensor, adam_step, backward, ops

logger = logging.getLogger(__name__)


@dataclass
class ModelParams:
    raw_metric: MetricParams  # similarity on input features
    emb_metric: MetricParams  # similarity on hidden embeddings
    gcn: GcnParams

    def tensors(self) -> dict[str, Tensor]:
        return {"raw_metric": self.raw_metric.weights, "emb_metric": self.emb_metric.weights,
                "w1": self.gcn.w1, "w2": self.gcn.w2}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.values.copy() for k, t in self.tensors().items()}

    def load(self, snap: dict[str, np.ndarray]) -> None:
        for k, t in self.tensors().items():
            if snap[k].shape != t.shape:
                raise ContractError(f"snapshot shape mismatch for {k}")
            t.values[...] = snap[k]


def init_params(dataset: Dataset, config: RunConfig, rng: np.random.Generator) -> ModelParams:
    raw = init_metric(dataset.d, config.heads, config.epsilon, rng, "raw_metric")
    emb = init_metric(config.hidden, config.heads, config.epsilon, rng, "emb_metric")
    gcn = init_gcn(dataset.d, config.hidden, dataset.n_classes, rng, config.dropout, config.iter_dropout)
    return ModelParams(raw, emb, gcn)


@dataclass
class GraphContext:
    """Per-dataset constants: features, initial graph and its normalisation."""

    x: Tensor
    a0: np.ndarray
    l0: np.ndarray | sp.csr_matrix  # sparse when A0 is


def prepare(dataset: Dataset, config: RunConfig) -> GraphContext:
    a0 = dataset.a0 if dataset.a0 is not None else knn_graph(dataset.x, config.knn_k)
    l0 = normalize_initial(a0)
    if np.count_nonzero(l0) < 0.2 * l0.size:
        l0 = sp.csr_matrix(l0)
    return GraphContext(Tensor(dataset.x), a0, l0)


# ---------------------------------------------------------------------------
# iteration bookkeeping

def stopping_check(a_t: np.ndarray, a_prev: Optional[np.ndarray], a_0: np.ndarray,
                   delta: float, t: int, max_iters: int) -> bool:
    """True to run another refinement iteration."""
    if t < 0:
        raise ContractError("iteration index must be >= 0")
    if t >= max_iters:
        return False
    if t == 0:
        return True
    base = float(np.vdot(a_0, a_0))
    if base == 0.0:
        logger.warning("initial learned adjacency is all zero; stopping threshold is 0")
    diff = a_t - a_prev
    return float(np.vdot(diff, diff)) > delta * base


def delta_a(a_t: np.ndarray, a_prev: np.ndarray) -> Optional[float]:
    """||A_t - A_prev||_F^2 / ||A_t||_F^2, or None when A_t is all zero."""
    den = float(np.vdot(a_t, a_t))
    if den == 0.0:
        return None
    diff = a_t - a_prev
    return float(np.vdot(diff, diff)) / den


@dataclass
class IterationTrace:
    adjacency: list[np.ndarray] = field(default_factory=list)  # A^(0), A^(1), ...
    delta_a: list[Optional[float]] = field(default_factory=list)  # for t >= 1
    pred_loss: list[float] = field(default_factory=list)  # index 0 is the initial pass
    graph_loss: list[float] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.adjacency) - 1

    def joint_losses(self) -> list[float]:
        return [p + g for p, g in zip(self.pred_loss, self.graph_loss)]

    def aggregate_loss(self) -> float:
        losses = self.joint_losses()
        if len(losses) == 1:
            return losses[0]
        return losses[0] + sum(losses[1:]) / (len(losses) - 1)


@dataclass
class ForwardResult:
    probs: np.ndarray
    loss: Tensor
    trace: IterationTrace
    step_probs: list[np.ndarray] = field(default_factory=list)  # class probabilities after each pass


def forward_pass(dataset: Dataset, params: ModelParams, config: RunConfig, training: bool = False,
                 rng: Optional[np.random.Generator] = None, ctx: Optional[GraphContext] = None,
                 loss_mask: Optional[np.ndarray] = None, fixed_iters: Optional[int] = None,
                 keep_steps: bool = False) -> ForwardResult:
    """Initial graph-learning pass followed by the refinement loop.

    ``fixed_iters`` replaces dynamic stopping with an exact iteration count.
    The returned ``loss`` is L^(0) + mean(L^(1..t)) over ``loss_mask``
    (train nodes by default).
    """
    ctx = ctx or prepare(dataset, config)
    mask = dataset.train if loss_mask is None else loss_mask
    weights = GraphRegWeights(config.alpha, config.beta, config.gamma)
    x = ctx.x
    trace = IterationTrace()
    steps = []

    l0 = FixedOperator(ctx.l0)  # memoises L0 @ M within this pass
    xw1 = x @ params.gcn.w1     # shared by every propagation of the first layer
    a_init = learn_adjacency(x, params.raw_metric)
    mixed_init = mix_with_initial(a_init, l0, config.lam)
    out = gcn_forward(mixed_init, x, params.gcn, training, rng, params.gcn.dropout, xw1=xw1)
    pred = logits_loss(out.logits, dataset.y, mask)
    greg = graph_reg_loss(a_init, x, weights)
    loss0 = pred + greg
    _check_loss(loss0, 0)
    trace.adjacency.append(a_init.values)
    trace.pred_loss.append(pred.item())
    trace.graph_loss.append(greg.item())
    if keep_steps:
        steps.append(out.probs.values)

    if fixed_iters is not None:
        limit = fixed_iters
        dynamic = False
    else:
        limit = config.max_iters if config.iterations_enabled else 0
        dynamic = True

    # same rule as stopping_check, sharing one ||A_t - A_(t-1)||^2 pass with delta_a
    base = float(np.vdot(a_init.values, a_init.values))
    if dynamic and limit > 0 and base == 0.0:
        logger.warning("initial learned adjacency is all zero; stopping threshold is 0")
    buf = np.empty_like(a_init.values)
    changed = None

    def keep_going() -> bool:
        if t >= limit:
            return False
        return not dynamic or t == 0 or changed > config.stop_delta * base

    iter_losses = []
    z = out.z
    t = 0
    while keep_going():
        t += 1
        a_t = learn_adjacency(z, params.emb_metric)
        mixed_t = mix_with_initial(a_t, l0, config.lam)
        blended = mix_iterations(mixed_t, mixed_init, config.eta)
        out = gcn_forward(blended, x, params.gcn, training, rng, params.gcn.iter_dropout, xw1=xw1)
        z = out.z
        pred = logits_loss(out.logits, dataset.y, mask)
        greg = graph_reg_loss(a_t, x, weights)
        loss_t = pred + greg
        _check_loss(loss_t, t)
        iter_losses.append(loss_t)
        np.subtract(a_t.values, trace.adjacency[-1], out=buf)
        changed = float(np.vdot(buf, buf))
        norm = float(np.vdot(a_t.values, a_t.values))
        trace.delta_a.append(changed / norm if norm else None)
        trace.adjacency.append(a_t.values)
        trace.pred_loss.append(pred.item())
        trace.graph_loss.append(greg.item())
        if keep_steps:
            steps.append(out.probs.values)

    if not dynamic:
        trace.stop_reason = "fixed"
    elif t > 0 and changed <= config.stop_delta * base:
        trace.stop_reason = "converged"
    else:
        trace.stop_reason = "max-iters"

    loss = loss0
    if iter_losses:
        loss = loss0 + ops.combine([(1.0 / t, l) for l in iter_losses])
    return ForwardResult(out.probs.values, loss, trace, steps)


def _check_loss(loss: Tensor, t: int) -> None:
    if not np.isfinite(loss.item()):
        raise FloatingPointError(f"non-finite joint loss at iteration {t}")


# ---------------------------------------------------------------------------
# training and evaluation

def accuracy(probs: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ContractError("accuracy over an empty node mask")
    return float(np.mean(np.argmax(probs[rows], axis=1) == y[rows]))


def evaluate(params: ModelParams, dataset: Dataset, mask: np.ndarray, config: RunConfig,
             ctx: Optional[GraphContext] = None) -> float:
    """Accuracy of a dropout-free forward pass (dynamic stopping) on ``mask``."""
    if not np.any(mask):
        raise ContractError("evaluate over an empty node mask")
    res = forward_pass(dataset, params, config, training=False, ctx=ctx, loss_mask=mask)
    return accuracy(res.probs, dataset.y, mask)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_acc: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_acc: float = -1.0
    best_snapshot: dict[str, np.ndarray] = field(default_factory=dict)


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, history: TrainHistory):
        super().__init__(message)
        self.history = history


def fit(dataset: Dataset, config: RunConfig, seed: Optional[int] = None,
        ctx: Optional[GraphContext] = None) -> tuple[ModelParams, TrainHistory]:
    """Full-batch training with Adam; keeps the parameters of the best dev epoch.

    Model selection is by dev accuracy with ties broken by lower dev loss
    (``select_on="accuracy"``), or by dev loss alone (``select_on="loss"``).
    Training stops after ``patience`` epochs without improvement.
    """
    seed = config.seed if seed is None else seed
    if not np.any(dataset.train) or not np.any(dataset.dev):
        raise ContractError("fit needs non-empty train and dev masks")
    ctx = ctx or prepare(dataset, config)
    rng = np.random.default_rng(seed)
    params = init_params(dataset, config, rng)
    tensors = params.tensors()
    state = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    hist = TrainHistory()
    best_key = (-np.inf, -np.inf)

    for epoch in range(config.max_epochs):
        try:
            with Tape() as tape:
                res = forward_pass(dataset, params, config, training=True, rng=rng, ctx=ctx)
            backward(tape, res.loss, list(tensors.values()))
            adam_step(state, tensors)
            dev = forward_pass(dataset, params, config, training=False, ctx=ctx, loss_mask=dataset.dev)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", hist) from exc
        dev_acc = accuracy(dev.probs, dataset.y, dataset.dev)
        dev_loss = dev.trace.pred_loss[-1]
        hist.train_loss.append(res.loss.item())
        hist.dev_acc.append(dev_acc)
        hist.dev_loss.append(dev_loss)
        hist.iterations.append(res.trace.iterations)
        key = (dev_acc, -dev_loss) if config.select_on == "accuracy" else (-dev_loss, dev_acc)
        if key > best_key:
            best_key = key
            hist.best_epoch = epoch
            hist.best_dev_acc = dev_acc
            hist.best_snapshot = params.snapshot()
        elif epoch - hist.best_epoch >= config.patience:
            break

    if hist.best_snapshot:
        params.load(hist.best_snapshot)
    return params, hist

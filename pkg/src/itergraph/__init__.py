"""Joint learning of graph structure and GCN node classifiers.

A learnable multi-head cosine metric builds a sparse graph over the nodes,
which is blended with an initial (given or kNN) graph and refined from the
GCN's own hidden embeddings until the learned adjacency stops changing.
"""

from .config import RunConfig, ablation_mode, load_config
from .data import Dataset, load_builtin, make_splits, perturb_edges
from .engine import ModelParams, evaluate, fit, forward_pass, prepare

__all__ = [
    "Dataset",
    "ModelParams",
    "RunConfig",
    "ablation_mode",
    "evaluate",
    "fit",
    "forward_pass",
    "load_builtin",
    "load_config",
    "make_splits",
    "perturb_edges",
    "prepare",
]

__version__ = "0.1.0"

"""Check the hand-written reverse-mode gradients against finite differences.

Run:  python3 demos/04_gradients.py

Every operation on the tape has a backward rule; grad_check perturbs each
parameter coordinate by +-h and compares the central difference with the
tape gradient.  Coordinates whose probes cross a relu or threshold kink are
skipped, since the function is not differentiable across them.
"""

import numpy as np

from itergraph.data import Dataset
from itergraph.engine import forward_pass, init_params, prepare
from itergraph.graphreg import GraphRegWeights, graph_reg_loss
from itergraph.numkit import Tensor, grad_check, ops
from itergraph import RunConfig

rng = np.random.default_rng(0)
n = 6
x = rng.normal(size=(n, 3))
y = np.array([0, 1, 0, 1, 1, 0])

s = Tensor(rng.uniform(0.1, 1.0, size=(n, n)), requires_grad=True)
err = grad_check(lambda: graph_reg_loss(ops.scale(s + s.T, 0.5), x, GraphRegWeights(0.2, 0.3, 0.1)),
                 [s], samples=None)
print(f"graph regulariser           max relative error {err:.1e}")

data = Dataset(x, y, np.arange(n) < 4, np.arange(n) == 4, np.arange(n) == 5, name="six")
cfg = RunConfig(lam=0.5, eta=0.5, alpha=0.2, beta=0.1, gamma=0.1, knn_k=2, epsilon=0.2, heads=2, hidden=4)
params = init_params(data, cfg, np.random.default_rng(1))
ctx = prepare(data, cfg)
err = grad_check(lambda: forward_pass(data, params, cfg, ctx=ctx, fixed_iters=2).loss,
                 list(params.tensors().values()), samples=None)
print(f"joint loss, all parameters  max relative error {err:.1e}")

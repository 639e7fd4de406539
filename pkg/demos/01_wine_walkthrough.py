"""Train on Wine and watch the learned graph settle.

Run:  python3 demos/01_wine_walkthrough.py

Wine has no graph, so the initial graph is a 20-nearest-neighbour cosine
graph over standardized features.  The model learns a weighted cosine
similarity, keeps pairs above epsilon, and then repeatedly rebuilds the
graph from its own hidden layer until consecutive graphs stop changing.
"""

import numpy as np

from itergraph import experiments, load_config
from itergraph.engine import fit, forward_pass, prepare

cfg = load_config("wine")  # bundled config
data = experiments.resolve_dataset(cfg)
print(f"{data.n} wines, {data.d} features, {data.n_classes} classes; "
      f"train/dev/test = {data.train.sum()}/{data.dev.sum()}/{data.test.sum()}")

ctx = prepare(data, cfg)
a0_edges = int(np.count_nonzero(np.triu(ctx.a0, 1)))
print(f"kNN graph: {a0_edges} undirected edges (k={cfg.knn_k})")

params, hist = fit(data, cfg, seed=0, ctx=ctx)
print(f"trained {len(hist.dev_acc)} epochs, best dev accuracy {hist.best_dev_acc:.2f} at epoch {hist.best_epoch}")

# one test-time pass, keeping the prediction after every refinement step
res = forward_pass(data, params, cfg, ctx=ctx, loss_mask=data.test, keep_steps=True)
print("\niter  edges/node  delta_A   test acc")
for t, (adj, probs) in enumerate(zip(res.trace.adjacency, res.step_probs)):
    acc = float(np.mean(probs[data.test].argmax(1) == data.y[data.test]))
    d = "" if t == 0 else f"{res.trace.delta_a[t - 1]:.4f}"
    print(f"{t:4d}  {np.count_nonzero(adj) / data.n:10.1f}  {d:>7}  {acc:8.3f}")
print(f"stopped: {res.trace.stop_reason} after {res.trace.iterations} refinements")

"""Experiment drivers: seed sweeps, robustness, convergence curves and timing.

Each driver returns an :class:`ExperimentReport`; writing it to disk is the
command-line layer's job.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, ablation_mode
from .data import (BUILTINS, DataError, Dataset, load_builtin, load_graph_dataset, load_tabular,
                   make_splits, perturb_edges, read_split_files)
from .engine import (GraphContext, TrainingDiverged, accuracy, fit, forward_pass, init_params,
                     prepare)

logger = logging.getLogger(__name__)

UNDEFINED = "undefined"  # delta_A marker when ||A^(t)|| = 0


def resolve_dataset(config: RunConfig) -> Dataset:
    """Load the data a config points at and attach its train/dev/test masks."""
    if config.features:
        norm = config.feature_norm or ("l1" if config.edges else "standardize")
        if not config.labels:
            raise ConfigError("features given without labels")
        if config.edges:
            ds = load_graph_dataset(Path(config.features), Path(config.labels), Path(config.edges),
                                    config.dataset or "graph", norm)
        else:
            ds = load_tabular(Path(config.features), Path(config.labels), config.dataset or "tabular", norm)
    elif config.dataset in BUILTINS:
        ds = load_builtin(config.dataset)
    elif config.dataset:
        raise DataError(f"unknown dataset {config.dataset!r}: give features/labels paths "
                        f"or one of {', '.join(BUILTINS)}")
    else:
        raise ConfigError("config names no dataset (set 'dataset' or 'features' and 'labels')")
    if config.split_dir:
        return ds.with_splits(*read_split_files(Path(config.split_dir), ds.n))
    if sum(config.split) == 0:
        raise ConfigError("config needs either split = [train, dev, test] or split_dir")
    return ds.with_splits(*make_splits(ds.y, config.split, config.split_seed))


@dataclass
class ExperimentReport:
    kind: str
    config: dict[str, Any]
    seeds: list[int]
    runs: list[dict[str, Any]] = field(default_factory=list)   # one per seed (and variant)
    failed: list[dict[str, Any]] = field(default_factory=list)
    table: list[dict[str, Any]] = field(default_factory=list)  # robustness / timing rows
    curves: dict[str, list[dict[str, Any]]] = field(default_factory=dict)

    def metric(self, key: str = "test_acc", variant: Optional[str] = None) -> list[float]:
        return [r[key] for r in self.runs if variant is None or r.get("variant") == variant]

    def mean_std(self, key: str = "test_acc", variant: Optional[str] = None) -> tuple[float, float]:
        vals = self.metric(key, variant)
        if not vals:
            return float("nan"), float("nan")
        return float(np.mean(vals)), float(np.std(vals))

    @property
    def ok(self) -> bool:
        return not self.failed

    def records(self) -> list[dict[str, Any]]:
        out: list[dict[str, Any]] = [{"record": "config", "kind": self.kind, "config": self.config,
                                      "seeds": self.seeds}]
        out += [{"record": "run", **r} for r in self.runs]
        out += [{"record": "failure", **f} for f in self.failed]
        out += [{"record": "row", **r} for r in self.table]
        variants = sorted({r.get("variant", "") for r in self.runs})
        for v in variants:
            mean, std = self.mean_std(variant=v or None)
            out.append({"record": "summary", "variant": v, "n": len(self.metric(variant=v or None)),
                        "mean_test_acc": mean, "std_test_acc": std})
        return out


def _stats(vals: Sequence[float]) -> tuple[float, float]:
    return float(np.mean(vals)), float(np.std(vals))


def run_seed(dataset: Dataset, config: RunConfig, seed: int,
             ctx: Optional[GraphContext] = None) -> dict[str, Any]:
    t0 = time.perf_counter()
    params, hist = fit(dataset, config, seed=seed, ctx=ctx)
    seconds = time.perf_counter() - t0
    res = forward_pass(dataset, params, config, training=False, ctx=ctx, loss_mask=dataset.test)
    return {
        "seed": seed,
        "test_acc": accuracy(res.probs, dataset.y, dataset.test),
        "dev_acc": hist.best_dev_acc,
        "best_epoch": hist.best_epoch,
        "epochs": len(hist.dev_acc),
        "test_iterations": res.trace.iterations,
        "seconds": seconds,
        "_params": params,
    }


def _sweep(dataset: Dataset, config: RunConfig, seeds: Sequence[int], report: ExperimentReport,
           variant: str = "", extra: Optional[dict[str, Any]] = None,
           keep: Optional[Callable[[int, dict[str, Any]], None]] = None) -> None:
    ctx = prepare(dataset, config)
    for seed in seeds:
        try:
            run = run_seed(dataset, config, seed, ctx)
        except TrainingDiverged as exc:
            logger.error("seed %d diverged: %s", seed, exc)
            report.failed.append({"seed": seed, "variant": variant, "error": str(exc)})
            continue
        params = run.pop("_params")
        if keep:
            keep(seed, {"params": params, "ctx": ctx, **run})
        if variant:
            run["variant"] = variant
        run.update(extra or {})
        report.runs.append(run)
        logger.info("%s seed %d: test %.4f (%d epochs, %.1fs)", variant or config.dataset or "run",
                    seed, run["test_acc"], run["epochs"], run["seconds"])


def train(config: RunConfig, seeds: Optional[Sequence[int]] = None, dataset: Optional[Dataset] = None,
          keep: Optional[Callable[[int, dict[str, Any]], None]] = None) -> ExperimentReport:
    """fit + test evaluation for every seed."""
    seeds = list(config.seeds if seeds is None else seeds)
    dataset = dataset or resolve_dataset(config)
    report = ExperimentReport("train", config.to_dict(), seeds)
    _sweep(dataset, config, seeds, report, keep=keep)
    return report


def robustness(config: RunConfig, mode: str, ratios: Sequence[float] = (0.25, 0.5, 0.75),
               seeds: Optional[Sequence[int]] = None, dataset: Optional[Dataset] = None) -> ExperimentReport:
    """Perturb the given graph at each ratio and compare against the lam = 1 GCN."""
    seeds = list(config.seeds if seeds is None else seeds)
    dataset = dataset or resolve_dataset(config)
    if dataset.a0 is None:
        raise DataError("robustness needs a dataset with a given graph (edges file)")
    gcn_cfg = ablation_mode(config, "no-graph-reg").replace(lam=1.0, ablation="no-iterative")
    report = ExperimentReport("robustness", config.to_dict(), seeds)
    report.config["perturbation"] = {"mode": mode, "ratios": list(ratios)}
    for ratio in ratios:
        for seed in seeds:
            # the perturbation seed follows the run seed so each run sees its own graph
            a0 = perturb_edges(dataset.a0, ratio, mode, seed)
            ds = dataset.replace(a0=a0)
            for variant, cfg in (("model", config), ("gcn", gcn_cfg)):
                _sweep(ds, cfg, [seed], report, variant, {"ratio": ratio, "edges": ds.n_edges})
        for variant in ("model", "gcn"):
            vals = [r["test_acc"] for r in report.runs if r["ratio"] == ratio and r["variant"] == variant]
            mean, std = _stats(vals) if vals else (float("nan"), float("nan"))
            report.table.append({"mode": mode, "ratio": ratio, "variant": variant, "n": len(vals),
                                 "mean_test_acc": mean, "std_test_acc": std})
    return report


def iteration_curve(dataset: Dataset, params, config: RunConfig, ctx: GraphContext,
                    fixed_iters: Optional[int] = None) -> list[dict[str, Any]]:
    """Test-time (iteration, delta_A, test accuracy) rows; row 0 is the initial pass."""
    res = forward_pass(dataset, params, config, training=False, ctx=ctx, loss_mask=dataset.test,
                       fixed_iters=fixed_iters, keep_steps=True)
    rows = []
    for t, probs in enumerate(res.step_probs):
        d = None if t == 0 else res.trace.delta_a[t - 1]
        rows.append({"iteration": t, "delta_a": d, "test_acc": accuracy(probs, dataset.y, dataset.test)})
    return rows


def convergence(config: RunConfig, seeds: Optional[Sequence[int]] = None,
                dataset: Optional[Dataset] = None) -> ExperimentReport:
    """Train once per seed, then trace dynamic stopping and every fixed count 1..T at test time."""
    seeds = list(config.seeds if seeds is None else seeds)
    dataset = dataset or resolve_dataset(config)
    report = ExperimentReport("convergence", config.to_dict(), seeds)
    dynamic: list[dict[str, Any]] = []
    fixed: list[dict[str, Any]] = []

    def keep(seed: int, run: dict[str, Any]) -> None:
        for row in iteration_curve(dataset, run["params"], config, run["ctx"]):
            dynamic.append({"seed": seed, **row})
        for count in range(1, config.max_iters + 1):
            for row in iteration_curve(dataset, run["params"], config, run["ctx"], fixed_iters=count):
                fixed.append({"seed": seed, "fixed_count": count, **row})

    _sweep(dataset, config, seeds, report, keep=keep)
    report.curves["dynamic"] = dynamic
    report.curves["fixed"] = fixed
    for count in range(1, config.max_iters + 1):
        finals = [r["test_acc"] for r in fixed if r["fixed_count"] == count and r["iteration"] == count]
        if finals:
            mean, std = _stats(finals)
            report.table.append({"stopping": f"fixed-{count}", "mean_test_acc": mean, "std_test_acc": std})
    mean, std = report.mean_std()
    report.table.append({"stopping": "dynamic", "mean_test_acc": mean, "std_test_acc": std})
    return report


def synthetic_dataset(n: int, d: int = 16, classes: int = 3, seed: int = 0) -> Dataset:
    """Gaussian blobs with class-balanced 10%/10%/rest splits, for scaling checks."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    centers = rng.normal(size=(classes, d)) * 2.0
    x = centers[y] + rng.normal(size=(n, d))
    k = max(classes, n // 10)
    masks = make_splits(y, (k, k, n - 2 * k), seed)
    return Dataset(x, y.astype(np.int64), *masks, name=f"synthetic-{n}")


def forward_seconds(dataset: Dataset, config: RunConfig, repeats: int = 3, seed: int = 0) -> float:
    """Median wall time of one dropout-free forward pass with a fixed iteration count."""
    ctx = prepare(dataset, config)
    params = init_params(dataset, config, np.random.default_rng(seed))
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        forward_pass(dataset, params, config, ctx=ctx, fixed_iters=config.max_iters)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def scaling_exponent(sizes: Sequence[int], seconds: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(n)."""
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def timing(config: RunConfig, seeds: Optional[Sequence[int]] = None, dataset: Optional[Dataset] = None,
           sizes: Sequence[int] = (100, 200, 400)) -> ExperimentReport:
    """Training wall time with and without refinement, plus a synthetic-n scaling check."""
    seeds = list(config.seeds if seeds is None else seeds)
    dataset = dataset or resolve_dataset(config)
    report = ExperimentReport("timing", config.to_dict(), seeds)
    for variant in ("full", "no-iterative"):
        _sweep(dataset, ablation_mode(config, variant), seeds, report, variant)
        secs = report.metric("seconds", variant)
        if secs:
            mean, std = _stats(secs)
            report.table.append({"variant": variant, "mean_seconds": mean, "std_seconds": std, "n": len(secs)})
    syn_cfg = config.replace(heads=1, epsilon=max(config.epsilon, 0.5))
    secs = [forward_seconds(synthetic_dataset(n), syn_cfg) for n in sizes]
    report.curves["scaling"] = [{"n": n, "seconds": s} for n, s in zip(sizes, secs)]
    report.table.append({"variant": "scaling", "exponent": scaling_exponent(sizes, secs)})
    return report

import csv
import json

import numpy as np
import pytest

from itergraph.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from itergraph.data import Dataset, make_splits, save_dataset

FAST = ["--set", "max_epochs=3", "--set", "max_iters=2"]


@pytest.fixture(scope="module")
def graph_config(tmp_path_factory):
    """A small two-block graph dataset on disk plus a config that points at it."""
    root = tmp_path_factory.mktemp("sbm")
    r = np.random.default_rng(0)
    n = 40
    y = np.arange(n) % 2
    p = np.where(y[:, None] == y[None, :], 0.3, 0.03)
    a = np.triu(r.uniform(size=(n, n)) < p, 1).astype(float)
    a = a + a.T
    x = r.normal(size=(n, 4)) + y[:, None]
    ds = Dataset(x, y.astype(np.int64), *make_splits(y, (6, 6, 28), 0), a0=a, name="sbm")
    save_dataset(ds, root / "data")
    cfg = root / "sbm.toml"
    cfg.write_text("\n".join([
        'dataset = "sbm"', 'features = "data/features.csv"', 'labels = "data/labels.csv"',
        'edges = "data/edges.txt"', 'split_dir = "data"', 'feature_norm = "none"',
        "lambda = 0.5", "eta = 0.5", "alpha = 0.1", "beta = 0.1", "gamma = 0.1", "epsilon = 0.3",
        "hidden = 4", "max_epochs = 3", "max_iters = 2", "seeds = [0, 1]",
    ]) + "\n")
    return cfg


def _records(path):
    return [json.loads(line) for line in (path / "report.jsonl").read_text().splitlines()]


def test_train_report_structure(tmp_path, capsys):
    out = tmp_path / "train"
    assert main(["train", "--config", "wine", "--seeds", "0,1", "--out", str(out)] + FAST) == EXIT_OK
    recs = _records(out)
    assert recs[0]["record"] == "config" and recs[0]["seeds"] == [0, 1]
    assert recs[0]["config"]["lambda"] == 0.8
    runs = [r for r in recs if r["record"] == "run"]
    assert [r["seed"] for r in runs] == [0, 1]
    summary = [r for r in recs if r["record"] == "summary"][0]
    accs = [r["test_acc"] for r in runs]
    assert summary["mean_test_acc"] == pytest.approx(np.mean(accs), rel=1e-15)
    assert summary["std_test_acc"] == pytest.approx(np.std(accs), rel=1e-12, abs=1e-15)
    assert "test accuracy" in (out / "summary.txt").read_text()
    assert (out / "params_seed1.npz").exists()
    assert "seed 0" in capsys.readouterr().out


def test_report_reproduces_exactly(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["train", "--config", "wine", "--seeds", "2", "--out", str(out)] + FAST) == EXIT_OK
    ra = [r for r in _records(a) if r["record"] == "run"][0]
    rb = [r for r in _records(b) if r["record"] == "run"][0]
    ra.pop("seconds"), rb.pop("seconds")
    assert ra == rb


def test_ablation_override(tmp_path):
    out = tmp_path / "wil"
    args = ["train", "--config", "wine", "--seeds", "0", "--set", "ablation=no-iterative", "--out", str(out)]
    assert main(args + FAST) == EXIT_OK
    recs = _records(out)
    assert recs[0]["config"]["ablation"] == "no-iterative"
    assert [r for r in recs if r["record"] == "run"][0]["test_iterations"] == 0


def test_eval_matches_train(tmp_path, capsys):
    out = tmp_path / "ev"
    main(["train", "--config", "wine", "--seeds", "0", "--out", str(out)] + FAST)
    acc = [r for r in _records(out) if r["record"] == "run"][0]["test_acc"]
    capsys.readouterr()
    code = main(["eval", "--config", "wine", "--params", str(out / "params_seed0.npz")] + FAST)
    assert code == EXIT_OK
    assert f"{100 * acc:.2f}" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main(["train", "--config", "wine", "--bogus"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["train"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_config_errors(capsys):
    assert main(["train", "--config", "wine", "--set", "lamda=0.5"]) == EXIT_USAGE
    assert "valid keys" in capsys.readouterr().err
    assert main(["train", "--config", "/no/such.toml"]) == EXIT_USAGE


def test_missing_data_file(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('features = "missing.csv"\nlabels = "y.csv"\nsplit = [1, 1, 1]\n')
    assert main(["train", "--config", str(cfg)]) == EXIT_DATA
    assert "missing.csv" in capsys.readouterr().err


def test_eval_missing_params(tmp_path):
    assert main(["eval", "--config", "wine", "--params", str(tmp_path / "none.npz")]) == EXIT_DATA


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from itergraph import engine
    from itergraph.numkit import ops

    real = engine.logits_loss
    monkeypatch.setattr(engine, "logits_loss", lambda *a: ops.scale(real(*a), np.nan))
    out = tmp_path / "nan"
    assert main(["train", "--config", "wine", "--seeds", "0,1", "--out", str(out)] + FAST) == EXIT_NUMERIC
    failures = [r for r in _records(out) if r["record"] == "failure"]
    assert [f["seed"] for f in failures] == [0, 1]
    assert "failed seeds: 0, 1" in capsys.readouterr().err


def test_robustness_needs_a_graph():
    assert main(["robustness", "--config", "wine", "--seeds", "0"] + FAST) == EXIT_DATA


def test_robustness_table(graph_config, tmp_path):
    out = tmp_path / "rob"
    args = ["robustness", "--config", str(graph_config), "--ratios", "0.25,0.5", "--out", str(out)]
    assert main(args) == EXIT_OK
    rows = [r for r in _records(out) if r["record"] == "row"]
    assert [(r["ratio"], r["variant"]) for r in rows] == [
        (0.25, "model"), (0.25, "gcn"), (0.5, "model"), (0.5, "gcn")]
    runs = [r for r in _records(out) if r["record"] == "run"]
    assert len(runs) == 2 * 2 * 2
    edges = {r["ratio"]: r["edges"] for r in runs}
    assert edges[0.5] < edges[0.25]
    with open(out / "robustness_table.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4


def test_robustness_ratio_zero_is_plain_training(graph_config, tmp_path):
    out = tmp_path / "r0"
    assert main(["robustness", "--config", str(graph_config), "--ratios", "0", "--seeds", "0",
                 "--out", str(out)]) == EXIT_OK
    model = [r for r in _records(out) if r["record"] == "run" and r["variant"] == "model"][0]
    out2 = tmp_path / "t0"
    assert main(["train", "--config", str(graph_config), "--seeds", "0", "--out", str(out2)]) == EXIT_OK
    plain = [r for r in _records(out2) if r["record"] == "run"][0]
    assert model["test_acc"] == plain["test_acc"]


def test_convergence_curves(tmp_path):
    out = tmp_path / "conv"
    args = ["convergence", "--config", "wine", "--seeds", "0", "--set", "max_epochs=2",
            "--set", "max_iters=3", "--out", str(out)]
    assert main(args) == EXIT_OK
    with open(out / "convergence_dynamic.csv") as fh:
        dyn = list(csv.DictReader(fh))
    assert 2 <= len(dyn) <= 4  # initial pass + at most T iterations
    for row in dyn[1:]:
        assert row["delta_a"] == "undefined" or 0.0 <= float(row["delta_a"]) <= 1.0
    with open(out / "convergence_fixed.csv") as fh:
        fixed = list(csv.DictReader(fh))
    assert sorted({int(r["fixed_count"]) for r in fixed}) == [1, 2, 3]
    assert len(fixed) == sum(c + 1 for c in (1, 2, 3))


def test_timing_report(tmp_path):
    out = tmp_path / "time"
    args = ["timing", "--config", "wine", "--seeds", "0,1", "--sizes", "40,80", "--out", str(out)] + FAST
    assert main(args) == EXIT_OK
    rows = {r["variant"]: r for r in _records(out) if r["record"] == "row"}
    assert {"full", "no-iterative", "scaling"} <= set(rows)
    assert rows["full"]["n"] == 2
    assert "exponent" in rows["scaling"]

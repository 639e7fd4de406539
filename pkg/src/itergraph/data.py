"""Datasets, on-disk formats, splits and edge perturbation.

On-disk layout of a dataset directory::

    features.csv   one row per node, numeric columns, optional header line
    labels.csv     one integer class per line
    edges.txt      optional, two whitespace-separated node indices per line
    train.txt, dev.txt, test.txt   optional, one node index per line
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray
    a0: Optional[np.ndarray] = None
    name: str = "dataset"
    n_classes: int = 0

    def __post_init__(self):
        n = self.x.shape[0]
        if n == 0:
            raise DataError("empty dataset")
        if self.x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.x.shape}")
        if not np.all(np.isfinite(self.x)):
            raise DataError("features contain NaN or Inf")
        if self.y.shape != (n,):
            raise DataError(f"{self.y.shape[0]} labels for {n} feature rows")
        c = self.n_classes or int(self.y.max()) + 1
        object.__setattr__(self, "n_classes", c)
        if self.y.min() < 0 or self.y.max() >= c:
            raise DataError(f"labels must lie in [0, {c})")
        for m in (self.train, self.dev, self.test):
            if m.shape != (n,) or m.dtype != bool:
                raise DataError("masks must be boolean vectors over the nodes")
        if np.any(self.train & self.dev) or np.any(self.train & self.test) or np.any(self.dev & self.test):
            raise DataError("train/dev/test masks overlap")
        if self.a0 is not None:
            a = self.a0
            if a.shape != (n, n):
                raise DataError(f"adjacency shape {a.shape} does not match {n} nodes")
            if not np.array_equal(a, a.T) or np.any(np.diag(a) != 0):
                raise DataError("initial adjacency must be symmetric with a zero diagonal")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_edges(self) -> int:
        return 0 if self.a0 is None else int(np.count_nonzero(np.triu(self.a0, 1)))

    def replace(self, **changes) -> "Dataset":
        return dataclasses.replace(self, **changes)

    def with_splits(self, train, dev, test) -> "Dataset":
        return self.replace(train=np.asarray(train, bool), dev=np.asarray(dev, bool),
                            test=np.asarray(test, bool))


def _empty_mask(n: int) -> np.ndarray:
    return np.zeros(n, dtype=bool)


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column; constant columns become zero."""
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - mu) / sd


def l1_rows(x: np.ndarray) -> np.ndarray:
    s = np.abs(x).sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return x / s


_NORMALIZERS = {"standardize": standardize, "l1": l1_rows, "none": lambda x: x}


# ---------------------------------------------------------------------------
# parsing

def _read_features(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{lineno}: NaN or Inf feature")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: empty dataset")
    return np.array(rows, dtype=np.float64)


def _read_ints(path: Path, what: str, columns: int = 1) -> list[list[int]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.replace(",", " ").split()
            if not parts:
                continue
            if len(parts) != columns:
                raise DataError(f"{path}:{lineno}: expected {columns} integer column(s) for {what}")
            try:
                out.append([int(p) for p in parts])
            except ValueError:
                if lineno == 1 and not out and columns == 1:
                    continue  # header
                raise DataError(f"{path}:{lineno}: {what} must be integers") from None
    return out


def _read_labels(path: Path) -> np.ndarray:
    vals = [r[0] for r in _read_ints(path, "labels")]
    y = np.array(vals, dtype=np.int64)
    if y.size and y.min() < 0:
        bad = int(np.flatnonzero(y < 0)[0]) + 1
        raise DataError(f"{path}: unknown label {y[bad - 1]} on data line {bad}")
    return y


def _read_edges(path: Path, n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for k, (i, j) in enumerate(_read_ints(path, "edge endpoints", columns=2), start=1):
        if not (0 <= i < n and 0 <= j < n):
            raise DataError(f"{path}: edge {k} ({i}, {j}) outside [0, {n})")
        if i != j:
            a[i, j] = a[j, i] = 1.0
    return a


def load_tabular(features: Path, labels: Path, name: str = "tabular",
                 normalize: str = "standardize") -> Dataset:
    """Features + labels with no graph; the engine builds a kNN graph."""
    x = _read_features(features)
    y = _read_labels(labels)
    if y.shape[0] != x.shape[0]:
        raise DataError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
    x = _NORMALIZERS[normalize](x)
    n = x.shape[0]
    return Dataset(x, y, _empty_mask(n), _empty_mask(n), _empty_mask(n), None, name)


def load_graph_dataset(features: Path, labels: Path, edges: Path, name: str = "graph",
                       normalize: str = "l1") -> Dataset:
    """Features, labels and an undirected edge list (duplicates and self-loops dropped)."""
    ds = load_tabular(features, labels, name, normalize)
    return ds.replace(a0=_read_edges(edges, ds.n))


BUILTINS = ("wine", "cancer", "digits")


def load_builtin(name: str) -> Dataset:
    """Wine, breast cancer or digits from the copies bundled with scikit-learn."""
    from sklearn import datasets as skd

    loaders = {"wine": skd.load_wine, "cancer": skd.load_breast_cancer,
               "breast_cancer": skd.load_breast_cancer, "digits": skd.load_digits}
    if name not in loaders:
        raise DataError(f"unknown builtin dataset {name!r}; choose from {sorted(loaders)}")
    bunch = loaders[name]()
    x = standardize(np.asarray(bunch.data, dtype=np.float64))
    y = np.asarray(bunch.target, dtype=np.int64)
    n = x.shape[0]
    return Dataset(x, y, _empty_mask(n), _empty_mask(n), _empty_mask(n), None,
                   "cancer" if name == "breast_cancer" else name)


def save_dataset(ds: Dataset, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "features.csv", "w") as fh:
        for row in ds.x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(directory / "labels.csv", "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in ds.y)
    if ds.a0 is not None:
        i, j = np.nonzero(np.triu(ds.a0, 1))
        with open(directory / "edges.txt", "w") as fh:
            fh.writelines(f"{a} {b}\n" for a, b in zip(i, j))
    for split in ("train", "dev", "test"):
        idx = np.flatnonzero(getattr(ds, split))
        with open(directory / f"{split}.txt", "w") as fh:
            fh.writelines(f"{k}\n" for k in idx)


def load_dataset_dir(directory: Path, name: Optional[str] = None, normalize: str = "none") -> Dataset:
    """Read a directory written by ``save_dataset`` (or laid out the same way)."""
    directory = Path(directory)
    ds = load_tabular(directory / "features.csv", directory / "labels.csv",
                      name or directory.name, normalize)
    if (directory / "edges.txt").exists():
        ds = ds.replace(a0=_read_edges(directory / "edges.txt", ds.n))
    if all((directory / f"{s}.txt").exists() for s in ("train", "dev", "test")):
        ds = ds.with_splits(*read_split_files(directory, ds.n))
    return ds


def read_split_files(directory: Path, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Masks from train.txt, dev.txt and test.txt (one node index per line)."""
    directory = Path(directory)
    masks = []
    for s in ("train", "dev", "test"):
        m = np.zeros(n, dtype=bool)
        idx = [r[0] for r in _read_ints(directory / f"{s}.txt", f"{s} indices")]
        if any(not 0 <= k < n for k in idx):
            raise DataError(f"{directory / (s + '.txt')}: node index outside [0, {n})")
        m[idx] = True
        masks.append(m)
    return masks[0], masks[1], masks[2]


# ---------------------------------------------------------------------------
# splits and perturbation

def make_splits(y: np.ndarray, counts: Sequence[int], seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random disjoint train/dev/test masks, the train draw balanced across classes.

    Each class contributes ``train // C`` nodes (remainder spread over randomly
    chosen classes, capped by class size); dev and test are uniform draws
    from what is left.
    """
    y = np.asarray(y)
    n = y.shape[0]
    n_train, n_dev, n_test = (int(c) for c in counts)
    if min(n_train, n_dev, n_test) < 0 or n_train + n_dev + n_test > n:
        raise DataError(f"split counts {tuple(counts)} exceed {n} nodes")
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    quota = {c: n_train // len(classes) for c in classes}
    for c in rng.permutation(classes)[: n_train % len(classes)]:
        quota[c] += 1
    chosen: list[int] = []
    spill = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(y == c))
        take = min(quota[c], members.size)
        spill += quota[c] - take
        chosen.extend(members[:take].tolist())
    rest = rng.permutation(np.setdiff1d(np.arange(n), chosen))
    if spill:
        chosen.extend(rest[:spill].tolist())
        rest = rest[spill:]
    train = np.zeros(n, dtype=bool)
    train[chosen] = True
    dev = np.zeros(n, dtype=bool)
    dev[rest[:n_dev]] = True
    test = np.zeros(n, dtype=bool)
    test[rest[n_dev:n_dev + n_test]] = True
    return train, dev, test


def perturb_edges(a0: np.ndarray, ratio: float, mode: str, seed: int) -> np.ndarray:
    """Delete or add ``round(ratio * |E|)`` undirected edges uniformly at random."""
    if not 0.0 <= ratio <= 1.0:
        raise DataError(f"ratio must lie in [0, 1], got {ratio}")
    if mode not in ("delete", "add"):
        raise DataError(f"mode must be 'delete' or 'add', got {mode!r}")
    a0 = np.asarray(a0, dtype=np.float64)
    n = a0.shape[0]
    iu, ju = np.triu_indices(n, 1)
    present = a0[iu, ju] != 0
    n_edges = int(present.sum())
    k = int(round(ratio * n_edges))
    out = a0.copy()
    if k == 0:
        return out
    rng = np.random.default_rng(seed)
    if mode == "delete":
        pick = rng.choice(np.flatnonzero(present), size=k, replace=False)
        out[iu[pick], ju[pick]] = 0.0
    else:
        absent = np.flatnonzero(~present)
        if absent.size < k:
            raise DataError(f"cannot add {k} edges: only {absent.size} absent pairs")
        pick = rng.choice(absent, size=k, replace=False)
        out[iu[pick], ju[pick]] = 1.0
    out[ju[pick], iu[pick]] = out[iu[pick], ju[pick]]
    return out

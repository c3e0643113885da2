"""Locating the public benchmark datasets and applying their official splits.

Set ``RIPML_DATA_DIR`` (or pass ``root``) to a directory holding one of these
layouts per benchmark, with ``<name>`` in ``bibtex``, ``delicious``, ``eurlex``
(matching is case-insensitive):

* ``<name>_train.txt`` and ``<name>_test.txt``
* ``<name>/train.txt`` and ``<name>/test.txt``
* ``<name>_data.txt`` with ``<name>_trSplit.txt`` / ``<name>_tstSplit.txt``
  (1-based row indices, one column per split; column 0 is used by default)
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .sparse import Dataset, load_dataset

__all__ = ["BenchmarkInfo", "BENCHMARKS", "data_root", "find_benchmark", "load_benchmark", "read_split_file"]

DATA_DIR_ENV = "RIPML_DATA_DIR"


@dataclass(frozen=True)
class BenchmarkInfo:
    name: str
    n_features: int
    avg_nnz_x: float
    n_labels: int
    avg_nnz_y: float
    n_total: int
    n_train: int
    n_test: int


# Published statistics of the three public datasets.
BENCHMARKS = {
    "bibtex": BenchmarkInfo("bibtex", 1836, 68.74, 159, 2.40, 7395, 4880, 2515),
    "eurlex": BenchmarkInfo("eurlex", 5000, 236.69, 3993, 5.31, 19314, 17383, 1931),
    "delicious": BenchmarkInfo("delicious", 500, 18.17, 983, 19.03, 16091, 12910, 3181),
}


def data_root(root=None) -> Path | None:
    root = root if root is not None else os.environ.get(DATA_DIR_ENV)
    return Path(root) if root else None


def _ci_lookup(directory: Path, filename: str) -> Path | None:
    if not directory.is_dir():
        return None
    want = filename.lower()
    for p in sorted(directory.iterdir()):
        if p.name.lower() == want:
            return p
    return None


def find_benchmark(name: str, root=None) -> dict[str, Path] | None:
    """Return the files making up benchmark ``name``, or None if absent."""
    base = data_root(root)
    if base is None:
        return None
    name = name.lower()
    train = _ci_lookup(base, f"{name}_train.txt")
    test = _ci_lookup(base, f"{name}_test.txt")
    if train and test:
        return {"train": train, "test": test}
    sub = _ci_lookup(base, name)
    if sub is not None:
        train, test = _ci_lookup(sub, "train.txt"), _ci_lookup(sub, "test.txt")
        if train and test:
            return {"train": train, "test": test}
    for d in (base, sub):
        if d is None:
            continue
        data = _ci_lookup(d, f"{name}_data.txt")
        tr = _ci_lookup(d, f"{name}_trSplit.txt")
        ts = _ci_lookup(d, f"{name}_tstSplit.txt")
        if data and tr and ts:
            return {"data": data, "train_split": tr, "test_split": ts}
    return None


def read_split_file(path, column: int = 0) -> np.ndarray:
    """Read a whitespace-separated split file and return 0-based row indices."""
    rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if column >= rows.shape[1]:
        raise DataError(f"{path}: no split column {column}")
    idx = rows[:, column] - 1
    if idx.size and idx.min() < 0:
        raise DataError(f"{path}: split indices must be 1-based")
    return idx


def load_benchmark(name: str, root=None, split: int = 0) -> tuple[Dataset, Dataset]:
    """Load the official (train, test) split of a benchmark dataset."""
    files = find_benchmark(name, root)
    if files is None:
        where = data_root(root)
        raise FileNotFoundError(
            f"benchmark {name!r} not found under {where if where else '$' + DATA_DIR_ENV + ' (unset)'}"
        )
    if "train" in files:
        return load_dataset(files["train"]), load_dataset(files["test"])
    full = load_dataset(files["data"])
    tr = read_split_file(files["train_split"], split)
    ts = read_split_file(files["test_split"], split)
    if max(tr.max(initial=-1), ts.max(initial=-1)) >= full.n_points:
        raise DataError(f"split indices exceed the {full.n_points} points in {files['data']}")
    return full.subset(tr), full.subset(ts)

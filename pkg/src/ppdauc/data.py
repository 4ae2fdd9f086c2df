"""Datasets, streaming sources, synthetic generators and file readers.

A :class:`Dataset` keeps its features as one ``(n, dim)`` float64 matrix and
its labels as an integer vector. Binary datasets use labels -1/+1; multi-class
ones use 0..c-1.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    LabelError,
    ParseError,
    UnsupportedError,
)

__all__ = [
    "Example",
    "Dataset",
    "StreamSource",
    "gen_two_gaussians",
    "make_imbalanced",
    "to_binary",
    "read_libsvm",
    "write_libsvm",
    "read_csv",
    "write_csv",
]


@dataclass(frozen=True)
class Example:
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels.

    Binary datasets use labels -1/+1. Multi-class datasets use 0..c-1; pass
    ``binary=False`` to hold a two-class dataset in that form.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int = 2
    binary: bool | None = None

    def __post_init__(self):
        if self.binary is None:
            object.__setattr__(self, "binary", self.num_classes == 2)
        if self.binary and self.num_classes != 2:
            raise ConfigError("a binary dataset has exactly two classes", "num_classes")
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise DimensionError(f"features must be a 2-D matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if self.binary:
            bad = ~np.isin(y, (-1, 1))
        else:
            bad = (y < 0) | (y >= self.num_classes)
        if np.any(bad):
            raise LabelError(f"label {int(y[bad][0])} outside the declared label domain")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, dim: int, num_classes: int = 2) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64), num_classes)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[Example]:
        for x, y in zip(self.X, self.y):
            yield Example(x, int(y))

    @property
    def examples(self) -> list[Example]:
        return list(self)

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.y == 1))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.y == -1))

    def positive_fraction(self) -> float:
        return self.n_pos / len(self)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes, self.binary)

    def split(self, test_frac: float, rng: np.random.Generator) -> tuple["Dataset", "Dataset"]:
        """Random train/test split; the test part gets ``round(test_frac * n)`` rows."""
        if not 0.0 <= test_frac < 1.0:
            raise ConfigError("must lie in [0, 1)", "test_frac")
        perm = rng.permutation(len(self))
        n_test = int(round(test_frac * len(self)))
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))

    def stream(self, rng: np.random.Generator) -> "StreamSource":
        return StreamSource.from_dataset(self, rng)


class StreamSource:
    """An unbounded i.i.d. sampler of labelled examples.

    ``sampler(rng, n)`` must return ``(X, y)`` with ``n`` rows. A source owns
    its generator, so it should be consumed by one worker only; use
    :meth:`clone` with a different seed for parallel consumers.
    """

    def __init__(self, sampler: Callable[[np.random.Generator, int], tuple], rng: np.random.Generator,
                 dim: int, num_classes: int = 2):
        self._sampler = sampler
        self.rng = rng
        self.dim = dim
        self.num_classes = num_classes
        self.consumed = 0

    @classmethod
    def from_dataset(cls, d: Dataset, rng: np.random.Generator) -> "StreamSource":
        if len(d) == 0:
            raise EmptyInputError("cannot stream from an empty dataset")
        X, y = d.X, d.y

        def sampler(g, n):
            idx = g.integers(0, X.shape[0], size=n)
            return X[idx], y[idx]

        return cls(sampler, rng, d.dim, d.num_classes)

    @classmethod
    def two_gaussians(cls, dim, mean_pos, mean_neg, scale, p, rng) -> "StreamSource":
        mean_pos, mean_neg = _check_gaussian_args(dim, mean_pos, mean_neg, scale, p)

        def sampler(g, n):
            return _draw_two_gaussians(g, n, dim, mean_pos, mean_neg, scale, p)

        return cls(sampler, rng, dim)

    def clone(self, rng: np.random.Generator) -> "StreamSource":
        return StreamSource(self._sampler, rng, self.dim, self.num_classes)

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        X, y = self._sampler(self.rng, int(n))
        self.consumed += int(n)
        return X, y

    def next(self) -> Example:
        X, y = self.draw(1)
        return Example(X[0], int(y[0]))


def _check_gaussian_args(dim, mean_pos, mean_neg, scale, p):
    if not 0.0 < p < 1.0:
        raise ConfigError(f"positive-class probability must lie in (0, 1), got {p}", "p")
    if not scale > 0:
        raise ConfigError(f"must be positive, got {scale}", "scale")
    mean_pos = np.broadcast_to(np.asarray(mean_pos, dtype=np.float64), (dim,)).copy()
    mean_neg = np.broadcast_to(np.asarray(mean_neg, dtype=np.float64), (dim,)).copy()
    return mean_pos, mean_neg


def _draw_two_gaussians(rng, n, dim, mean_pos, mean_neg, scale, p):
    y = np.where(rng.random(n) < p, 1, -1).astype(np.int64)
    noise = rng.standard_normal((n, dim))
    means = np.where((y == 1)[:, None], mean_pos, mean_neg)
    return means + scale * noise, y


def gen_two_gaussians(n: int, dim: int, mean_pos, mean_neg, scale: float, p: float,
                      rng: np.random.Generator) -> Dataset:
    """Binary dataset with Bernoulli(p) labels and isotropic Gaussian classes."""
    mean_pos, mean_neg = _check_gaussian_args(dim, mean_pos, mean_neg, scale, p)
    if n == 0:
        return Dataset.empty(dim)
    X, y = _draw_two_gaussians(rng, n, dim, mean_pos, mean_neg, scale, p)
    return Dataset(X, y)


def make_imbalanced(d: Dataset, drop_frac: float, rng: np.random.Generator) -> Dataset:
    """Drop a fraction of the negatives, keep every positive, shuffle the result."""
    if not d.binary:
        raise UnsupportedError("make_imbalanced only handles binary datasets")
    if not 0.0 <= drop_frac < 1.0:
        raise ConfigError(f"must lie in [0, 1), got {drop_frac}", "drop_frac")
    pos = np.flatnonzero(d.y == 1)
    neg = np.flatnonzero(d.y == -1)
    # (1 - 0.9) * 100 evaluates to 9.999...; nudge before flooring
    keep = int(np.floor((1.0 - drop_frac) * neg.size + 1e-9))
    kept_neg = rng.choice(neg, size=keep, replace=False)
    idx = np.concatenate([pos, kept_neg])
    return d.subset(idx[rng.permutation(idx.size)])


def to_binary(d: Dataset, positive_classes: Sequence[int]) -> Dataset:
    """Map a multi-class dataset to -1/+1 by membership in ``positive_classes``."""
    if d.binary and set(np.unique(d.y)) <= {-1, 1}:
        return d
    y = np.where(np.isin(d.y, list(positive_classes)), 1, -1)
    return Dataset(d.X, y)


def _binary_label(token: str, line_no: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"bad label {token!r}", line_no) from None
    if value in (1.0,):
        return 1
    if value in (0.0, -1.0):
        return -1
    raise ParseError(f"label {token!r} is not binary (expected 0/-1/1/+1)", line_no)


def _class_label(token: str, line_no: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"bad label {token!r}", line_no) from None
    if value != int(value) or value < 0:
        raise ParseError(f"class label {token!r} must be a non-negative integer", line_no)
    return int(value)


def read_libsvm(path, binary: bool = True, dim: int | None = None) -> Dataset:
    """Read a LIBSVM/SVMlight text file (1-based feature indices on disk)."""
    text = Path(path).read_text(encoding="utf-8")
    labels, rows = [], []
    max_index = 0
    for line_no, raw in enumerate(io.StringIO(text, newline=None), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _binary_label(tokens[0], line_no) if binary else _class_label(tokens[0], line_no)
        entries = {}
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"expected index:value, got {tok!r}", line_no)
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", line_no) from None
            if idx < 1:
                raise ParseError(f"feature index must be >= 1, got {idx}", line_no)
            if not np.isfinite(val):
                raise ParseError(f"non-finite feature value {val_s!r}", line_no)
            entries[idx - 1] = val
            max_index = max(max_index, idx)
        labels.append(label)
        rows.append(entries)
    if not rows:
        raise EmptyInputError(f"{path}: no records")
    n_dim = max_index if dim is None else int(dim)
    if n_dim < max_index:
        raise DimensionError(f"feature index {max_index} exceeds requested dim {n_dim}")
    X = np.zeros((len(rows), n_dim))
    for r, entries in enumerate(rows):
        for c, v in entries.items():
            X[r, c] = v
    y = np.asarray(labels, dtype=np.int64)
    num_classes = 2 if binary else int(y.max()) + 1
    return Dataset(X, y, num_classes, binary)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_libsvm(d: Dataset, path) -> None:
    lines = []
    for x, y in zip(d.X, d.y):
        label = ("+1" if y == 1 else "-1") if d.binary else str(int(y))
        feats = " ".join(f"{i + 1}:{_fmt(v)}" for i, v in enumerate(x) if v != 0.0)
        lines.append(f"{label} {feats}".rstrip())
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _numeric_row(record) -> bool:
    try:
        for cell in record:
            float(cell)
    except ValueError:
        return False
    return True


def read_csv(path, label_column: int | str = -1, binary: bool = True, header: bool | None = None) -> Dataset:
    """Read a CSV file; every non-label column is a feature.

    ``header=None`` treats the first row as a header unless every cell in it
    parses as a number. A named ``label_column`` needs a header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        records = [(n, r) for n, r in enumerate(csv.reader(fh), start=1) if r]
    if not records:
        raise EmptyInputError(f"{path}: empty file")
    first = records[0][1]
    has_header = (not _numeric_row(first)) if header is None else header
    width = len(first)
    if isinstance(label_column, str):
        if not has_header or label_column not in first:
            raise ConfigError(f"no column named {label_column!r}", "label_column")
        label_idx = first.index(label_column)
    else:
        if not -width <= label_column < width:
            raise ConfigError(f"column {label_column} out of range for {width} columns", "label_column")
        label_idx = label_column % width
    labels, rows = [], []
    for line_no, record in records[1:] if has_header else records:
        if len(record) != width:
            raise ParseError(f"expected {width} cells, got {len(record)}", line_no)
        if any(cell.strip() == "" for cell in record):
            raise ParseError("missing cell", line_no)
        tok = record[label_idx].strip()
        labels.append(_binary_label(tok, line_no) if binary else _class_label(tok, line_no))
        try:
            rows.append([float(c) for i, c in enumerate(record) if i != label_idx])
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
    if not rows:
        raise EmptyInputError(f"{path}: no records")
    y = np.asarray(labels, dtype=np.int64)
    return Dataset(np.asarray(rows), y, 2 if binary else int(y.max()) + 1, binary)


def write_csv(d: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(d.dim)] + ["label"])
        for x, y in zip(d.X, d.y):
            writer.writerow([_fmt(v) for v in x] + [int(y)])

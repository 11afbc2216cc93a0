"""Datasets: LIBSVM ingestion, preprocessing, neighbor construction, synthetic data.

A :class:`Dataset` stores its samples in CSR form (0-based columns internally,
1-based indices at the :class:`Sample` surface, as in the LIBSVM format).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Sample:
    """One example ``z = (x, y)`` with a sparse feature vector.

    ``indices`` are 1-based and strictly increasing.
    """

    indices: np.ndarray
    values: np.ndarray
    label: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and idx[0] < 1:
            raise ValueError("feature indices are 1-based")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("feature indices must be strictly increasing")
        if not np.all(np.isfinite(val)) or not math.isfinite(self.label):
            raise ValueError("non-finite value in sample")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "label", float(self.label))

    @classmethod
    def from_dense(cls, x: Sequence[float], label: float) -> Sample:
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz + 1, x[nz], label)

    @property
    def max_index(self) -> int:
        return int(self.indices[-1]) if self.indices.size else 0

    def dense(self, dimension: int) -> np.ndarray:
        out = np.zeros(dimension)
        out[self.indices - 1] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.label == other.label
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.label, self.indices.tobytes(), self.values.tobytes()))


class Dataset:
    """Ordered collection of samples held as CSR arrays."""

    def __init__(self, indptr, indices, data, labels, dimension: int | None = None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.float64)
        inferred = int(self.indices.max()) + 1 if self.indices.size else 0
        if dimension is None:
            dimension = max(inferred, 1)
        if dimension < inferred:
            raise ValueError(f"dimension {dimension} < max feature index {inferred}")
        self.dimension = int(dimension)
        if self.indptr.shape[0] != self.labels.shape[0] + 1:
            raise ValueError("indptr/labels length mismatch")

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], dimension: int | None = None) -> Dataset:
        samples = list(samples)
        counts = [s.indices.size for s in samples]
        indptr = np.zeros(len(samples) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        if samples:
            indices = np.concatenate([s.indices - 1 for s in samples])
            data = np.concatenate([s.values for s in samples])
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        labels = np.array([s.label for s in samples], dtype=np.float64)
        return cls(indptr, indices, data, labels, dimension)

    @classmethod
    def from_dense(cls, X, y, dimension: int | None = None) -> Dataset:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y differ in length")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite value in sample")
        rows, cols = np.nonzero(X)
        indptr = np.zeros(X.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=X.shape[0]), out=indptr[1:])
        return cls(indptr, cols, X[rows, cols], y, dimension or X.shape[1])

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i: int) -> Sample:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return Sample(self.indices[lo:hi] + 1, self.data[lo:hi], self.labels[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    @property
    def csr(self):
        return self.indptr, self.indices, self.data, self.labels

    def dense(self) -> np.ndarray:
        X = np.zeros((len(self), self.dimension))
        for i in range(len(self)):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            X[i, self.indices[lo:hi]] = self.data[lo:hi]
        return X

    def row_norms_sq(self) -> np.ndarray:
        rows = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        return np.bincount(rows, weights=self.data * self.data, minlength=len(self))

    def subset(self, order: Sequence[int]) -> Dataset:
        order = np.asarray(order, dtype=np.int64).reshape(-1)
        lo, hi = self.indptr[order], self.indptr[order + 1]
        indptr = np.zeros(order.size + 1, dtype=np.int64)
        np.cumsum(hi - lo, out=indptr[1:])
        take = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if order.size else np.zeros(0, np.int64)
        take = take.astype(np.int64)
        return Dataset(indptr, self.indices[take], self.data[take], self.labels[order], self.dimension)

    def with_dimension(self, dimension: int) -> Dataset:
        return Dataset(self.indptr, self.indices, self.data, self.labels, dimension)

    def replace(self, i: int, sample: Sample) -> Dataset:
        samples = self.samples
        samples[i] = sample
        dim = max(self.dimension, sample.max_index)
        return Dataset.from_samples(samples, dim)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.dimension == other.dimension
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data)
                and np.array_equal(self.labels, other.labels))

    def __repr__(self):
        return f"Dataset(n={len(self)}, dimension={self.dimension}, nnz={self.data.size})"


@dataclass(frozen=True, eq=False)
class NeighborPair:
    """``S`` and ``S^(i)``: equal except at ``replaced_index`` (1-based)."""

    base: Dataset
    neighbor: Dataset
    replaced_index: int
    replacement: Sample

    def __post_init__(self):
        n = len(self.base)
        if len(self.neighbor) != n:
            raise ValueError("neighbor has a different length")
        if not 1 <= self.replaced_index <= n:
            raise ValueError("replaced_index out of range")

    def swapped(self) -> NeighborPair:
        i = self.replaced_index
        return NeighborPair(self.neighbor, self.base, i, self.base[i - 1])


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Gaussian design ``x ~ N(0, I_d)``, ``y = <w_true, x> + N(0, noise_std^2)``."""

    dimension: int
    true_weights: np.ndarray = field(default=None)
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        w = self.true_weights
        w = np.zeros(self.dimension) if w is None else np.asarray(w, dtype=np.float64)
        if w.shape != (self.dimension,):
            raise ValueError("true_weights must have length dimension")
        object.__setattr__(self, "true_weights", w)


# ---------------------------------------------------------------- LIBSVM text

def _parse_float(tok: str, lineno: int, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(lineno, f"bad float {tok!r} in {what}") from None
    if not math.isfinite(v):
        raise ParseError(lineno, f"non-finite {what} {tok!r}")
    return v


def parse_libsvm(source: str | bytes | IO, dimension: int | None = None) -> Dataset:
    """Parse LIBSVM ``label idx:val ...`` lines into a :class:`Dataset`.

    ``#`` starts a comment that runs to the end of the line; blank lines are
    skipped. Indices are 1-based and must be strictly increasing.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    labels: list[float] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_float(tokens[0], lineno, "label"))
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"malformed token {tok!r}")
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(lineno, f"bad index {idx_s!r}") from None
            if idx < 1:
                raise ParseError(lineno, f"index {idx} is not 1-based")
            if idx == prev:
                raise ParseError(lineno, f"duplicate index {idx}")
            if idx < prev:
                raise ParseError(lineno, f"non-increasing index {idx} after {prev}")
            prev = idx
            indices.append(idx - 1)
            values.append(_parse_float(val_s, lineno, "value"))
        indptr.append(len(indices))
    try:
        return Dataset(indptr, np.array(indices, dtype=np.int64), np.array(values), labels, dimension)
    except ValueError as err:
        raise ParseError(0, str(err)) from None


def load_libsvm(path: str | Path, dimension: int | None = None) -> Dataset:
    with open(path, "rb") as fh:
        return parse_libsvm(fh, dimension)


def _fmt(v: float) -> str:
    # repr is the shortest string that round-trips
    if v == int(v) and abs(v) < 1e16 and math.copysign(1.0, v) > 0:
        return str(int(v))
    return repr(float(v))


def format_libsvm(data: Dataset) -> str:
    lines = []
    for s in data:
        toks = [_fmt(s.label)]
        toks += [f"{i}:{_fmt(v)}" for i, v in zip(s.indices, s.values)]
        lines.append(" ".join(toks))
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------- preprocessing

def preprocess(data: Dataset, class_labels: Sequence[float] | None = None) -> Dataset:
    """Binarize labels by rank and scale each nonzero feature vector to unit norm.

    Labels in the lower half of the sorted distinct labels become -1, the rest
    +1; with an odd count the median goes to the lower half.
    """
    if len(data) == 0:
        raise PreprocessError("empty dataset")
    if class_labels is None:
        class_labels = np.unique(data.labels)
    classes = sorted(set(float(c) for c in class_labels))
    if len(classes) < 2:
        raise PreprocessError("need at least two distinct labels")
    lower = set(classes[: (len(classes) + 1) // 2])
    unknown = set(np.unique(data.labels).tolist()) - set(classes)
    if unknown:
        raise PreprocessError(f"labels {sorted(unknown)} not in class list")
    labels = np.array([-1.0 if lab in lower else 1.0 for lab in data.labels])
    scaled = normalize_rows(data)
    return Dataset(scaled.indptr, scaled.indices, scaled.data, labels, data.dimension)


def normalize_rows(data: Dataset) -> Dataset:
    """Unit-norm features, labels untouched."""
    values = data.data.copy()
    for i in range(len(data)):
        lo, hi = data.indptr[i], data.indptr[i + 1]
        nrm = math.sqrt(math.fsum(values[lo:hi] ** 2))
        if nrm > 0:
            values[lo:hi] /= nrm
    return Dataset(data.indptr, data.indices, values, data.labels, data.dimension)


def split_train(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    n = len(data)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    n_train = int(math.floor(fraction * n + 1e-9))
    if n_train < 1:
        raise ValueError("fraction * n < 1")
    order = np.random.default_rng(seed).permutation(n)
    return data.subset(order[:n_train]), data.subset(order[n_train:])


def make_neighbor(train: Dataset, pool: Dataset, seed: int, index: int | None = None) -> NeighborPair:
    """Replace one training example with a uniform draw from ``pool``.

    ``index`` (1-based) pins the replaced position; otherwise it is drawn.
    """
    if len(pool) == 0:
        raise ValueError("replacement pool is empty")
    rng = np.random.default_rng(seed)
    i = int(rng.integers(1, len(train) + 1))
    j = int(rng.integers(0, len(pool)))
    if index is not None:
        i = int(index)
    replacement = pool[j]
    dim = max(train.dimension, pool.dimension)
    base = train if train.dimension == dim else train.with_dimension(dim)
    neighbor = base.replace(i - 1, replacement)
    return NeighborPair(base, neighbor, i, replacement)


# ----------------------------------------------------------------- synthetic

def _synthetic_design(spec: SyntheticSpec, n: int):
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((n, spec.dimension))
    noise = rng.standard_normal(n) * spec.noise_std
    return X, X @ spec.true_weights + noise


def generate_synthetic(spec: SyntheticSpec, n: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    X, y = _synthetic_design(spec, n)
    return Dataset.from_dense(X, y, spec.dimension)


def generate_synthetic_classification(spec: SyntheticSpec, n: int) -> Dataset:
    """Labels ``sign(<w_true, x> + noise)`` (ties to +1), features scaled to unit norm."""
    X, y = _synthetic_design(spec, n)
    labels = np.where(y >= 0, 1.0, -1.0)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return Dataset.from_dense(X, labels, spec.dimension)


def population_risk_ls(spec: SyntheticSpec, w, model=None) -> float:
    """Exact population risk of least squares under the Gaussian generator.

    ``0.5 * (||w - w_true||^2 + noise_std^2)``, plus ``0.5 * l2 * ||w||^2`` if
    ``model`` carries an l2 term.
    """
    l2 = 0.0
    if model is not None:
        if model.kind != "least_squares":
            raise ValueError("population risk is closed-form only for least squares")
        l2 = model.l2
    w = np.asarray(w, dtype=np.float64)
    diff = w - spec.true_weights
    return 0.5 * (float(diff @ diff) + spec.noise_std ** 2) + 0.5 * l2 * float(w @ w)


def population_minimizer_ls(spec: SyntheticSpec, l2: float = 0.0) -> np.ndarray:
    return spec.true_weights / (1.0 + l2)

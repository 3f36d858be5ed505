"""Sparse term-weight vectors, static top-k pruning, and L0 accounting.

A ``SparseVec`` is the unit of query/document representation: a set of
(term id, positive weight) pairs over the expanded output vocabulary,
stored with strictly increasing term ids. Pruning keeps the ``k``
highest-weight entries (the indexed impact is the pruning key), with
ties broken toward the lowest term id so results are platform-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SparseVec:
    """Nonnegative weighted term set; zero weights are never stored.

    Invariants (checked at construction): ids strictly increasing,
    weights strictly positive and finite.
    """

    ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if ids.ndim != 1 or weights.ndim != 1 or ids.shape != weights.shape:
            raise DataError("ids and weights must be 1-D arrays of equal length")
        if ids.size and np.any(np.diff(ids) <= 0):
            raise DataError("term ids must be strictly increasing")
        if not np.all(np.isfinite(weights)):
            raise DataError("weights must be finite")
        if np.any(weights <= 0):
            raise DataError("weights must be strictly positive (zeros are removed)")
        ids.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseVec":
        """Build from a dense weight vector, dropping zero and negative entries."""
        dense = np.asarray(dense, dtype=np.float64)
        ids = np.nonzero(dense > 0)[0]
        return cls(ids.astype(np.int64), dense[ids])

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVec":
        """Build from (term_id, weight) pairs in any order; duplicate ids are an error."""
        items = sorted(pairs)
        ids = np.array([t for t, _ in items], dtype=np.int64)
        weights = np.array([w for _, w in items], dtype=np.float64)
        if ids.size and np.any(np.diff(ids) == 0):
            raise DataError("duplicate term id in sparse vector")
        return cls(ids, weights)

    @classmethod
    def empty(cls) -> "SparseVec":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))

    @property
    def nnz(self) -> int:
        return int(self.ids.size)

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim, dtype=np.float64)
        out[self.ids] = self.weights
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVec):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.ids.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True)
class PruneConfig:
    """Max retained query/document terms; 0 means unpruned."""

    qk: int = 0
    dk: int = 0

    def __post_init__(self):
        if self.qk < 0 or self.dk < 0:
            raise DataError("qk and dk must be >= 0")


@dataclass(frozen=True)
class PruneReport:
    """Mean nonzero counts after pruning a collection."""

    l0_q: float
    l0_d: float


def dot(a: SparseVec, b: SparseVec) -> float:
    """Inner product over shared term ids."""
    _, ia, ib = np.intersect1d(a.ids, b.ids, assume_unique=True, return_indices=True)
    return float(np.dot(a.weights[ia], b.weights[ib]))


def prune(v: SparseVec, k: int) -> SparseVec:
    """Keep the ``k`` highest-weight entries (ties -> lowest term id); k=0 keeps all."""
    if k < 0:
        raise DataError("prune size must be >= 0")
    if k == 0 or v.nnz <= k:
        return v
    # lexsort: primary key descending weight, secondary ascending id
    order = np.lexsort((v.ids, -v.weights))[:k]
    keep = np.sort(v.ids[order])
    pos = np.searchsorted(v.ids, keep)
    return SparseVec(keep, v.weights[pos])


def l0_report(
    queries: Sequence[SparseVec], docs: Sequence[SparseVec], cfg: PruneConfig
) -> PruneReport:
    """Mean post-pruning nonzero counts over both collections."""
    if not len(queries) or not len(docs):
        raise DataError("l0_report requires nonempty query and document collections")
    l0_q = float(np.mean([prune(q, cfg.qk).nnz for q in queries]))
    l0_d = float(np.mean([prune(d, cfg.dk).nnz for d in docs]))
    return PruneReport(l0_q=l0_q, l0_d=l0_d)


def format_vector(vec: SparseVec) -> str:
    """Terms ascending, weights with 6 significant digits."""
    return " ".join(f"{t}:{w:.6g}" for t, w in zip(vec.ids, vec.weights))


def write_vectors(path, items: Iterable[tuple[str, SparseVec]]) -> None:
    """Write named vectors, one per line: ``id<TAB>term:weight term:weight ...``."""
    with open(path, "w", encoding="utf-8") as f:
        for name, vec in items:
            f.write(f"{name}\t{format_vector(vec)}\n")


def read_vectors(path) -> list[tuple[str, SparseVec]]:
    """Parse the text vector format; accepts any finite positive weight."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            name, _, rest = line.partition("\t")
            if not name:
                raise DataError(f"{path}:{lineno}: missing vector id")
            pairs = []
            for tok in rest.split():
                term, _, weight = tok.partition(":")
                try:
                    pairs.append((int(term), float(weight)))
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: bad entry {tok!r}") from e
            try:
                out.append((name, SparseVec.from_pairs(pairs)))
            except DataError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return out

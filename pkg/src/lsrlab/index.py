"""Inverted index over pruned document vectors with posting-list statistics.

Documents are pruned to their top ``dk`` terms (0 = unpruned) and inverted
into term -> posting list of (internal doc id, impact weight), sorted by doc
id. Internal ids are assigned by sorting the external document ids, so the
built index is identical regardless of input order or shard count. Impacts
are stored at full precision.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .sparsevec import SparseVec, prune

_MAGIC = b"LSRIDX01"
_VERSION = 1

_EMPTY_IDS = np.empty(0, dtype=np.int64)
_EMPTY_W = np.empty(0, dtype=np.float64)


@dataclass
class InvertedIndex:
    """Term postings plus the internal/external doc-id mapping.

    ``postings[t]`` is a pair of parallel arrays (doc ids ascending, impact
    weights); terms with no postings are absent from the dict.
    """

    doc_ids: tuple          # external ids, position = internal id
    postings: dict[int, tuple[np.ndarray, np.ndarray]]
    dk: int
    vocab_hash: str = ""
    _doc_to_internal: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._doc_to_internal = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def n_terms(self) -> int:
        return len(self.postings)

    def internal_id(self, doc_id) -> int:
        return self._doc_to_internal[doc_id]


@dataclass(frozen=True)
class PostingStats:
    """Population statistics of posting-list lengths over nonempty terms."""

    mean: float
    variance: float
    std: float


def build(
    docs: Iterable[tuple[object, SparseVec]],
    dk: int,
    threads: int = 1,
    vocab_hash: str = "",
) -> InvertedIndex:
    """Prune each document to dk terms and invert.

    The result is deterministic regardless of input order or ``threads``.
    Duplicate external doc ids are an error.
    """
    docs = list(docs)
    ids = [d for d, _ in docs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate document id")
    order = sorted(range(len(docs)), key=lambda i: ids[i])
    doc_ids = tuple(ids[i] for i in order)

    def shard_postings(span: range) -> dict[int, list[tuple[int, float]]]:
        part: dict[int, list[tuple[int, float]]] = {}
        for internal in span:
            vec = prune(docs[order[internal]][1], dk)
            for t, w in zip(vec.ids, vec.weights):
                part.setdefault(int(t), []).append((internal, float(w)))
        return part

    n = len(docs)
    threads = max(1, threads)
    if threads == 1 or n < 2:
        parts = [shard_postings(range(n))]
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        spans = [range(bounds[i], bounds[i + 1]) for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(shard_postings, spans))

    merged: dict[int, list[tuple[int, float]]] = {}
    for part in parts:
        for t, pairs in part.items():
            merged.setdefault(t, []).extend(pairs)
    postings = {}
    for t in sorted(merged):
        pairs = sorted(merged[t])  # doc ids ascending; unique by construction
        postings[t] = (
            np.array([p[0] for p in pairs], dtype=np.int64),
            np.array([p[1] for p in pairs], dtype=np.float64),
        )
    return InvertedIndex(doc_ids=doc_ids, postings=postings, dk=dk, vocab_hash=vocab_hash)


def posting(index: InvertedIndex, term_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Posting list for a term; empty arrays for absent terms."""
    return index.postings.get(int(term_id), (_EMPTY_IDS, _EMPTY_W))


def posting_lengths(index: InvertedIndex) -> np.ndarray:
    return np.array([ids.size for ids, _ in index.postings.values()], dtype=np.int64)


def posting_stats(index: InvertedIndex) -> PostingStats:
    """Population mean/variance/std of posting-list lengths (nonempty terms only)."""
    lengths = posting_lengths(index)
    if lengths.size == 0:
        raise DataError("index has no postings")
    mean = float(lengths.mean())
    var = float(np.mean((lengths - mean) ** 2))
    return PostingStats(mean=mean, variance=var, std=float(np.sqrt(var)))


def save_index(path, index: InvertedIndex) -> None:
    """Binary index format; round-trips byte-exactly.

    Layout: magic, version, |D|, term count, vocab hash, dk, the external
    doc-id list (JSON), then per-term blocks of (term id, length,
    delta-encoded doc ids, weights).
    """
    doc_block = json.dumps(list(index.doc_ids), separators=(",", ":")).encode("utf-8")
    vocab_block = index.vocab_hash.encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IQQ", _VERSION, index.n_docs, index.n_terms))
        f.write(struct.pack("<I", len(vocab_block)))
        f.write(vocab_block)
        f.write(struct.pack("<q", index.dk))
        f.write(struct.pack("<Q", len(doc_block)))
        f.write(doc_block)
        for t in sorted(index.postings):
            ids, weights = index.postings[t]
            deltas = np.diff(ids, prepend=np.int64(0))
            f.write(struct.pack("<qQ", t, ids.size))
            f.write(np.ascontiguousarray(deltas, dtype="<i8").tobytes())
            f.write(np.ascontiguousarray(weights, dtype="<f8").tobytes())


def load_index(path) -> InvertedIndex:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise DataError(f"{path}: not an index file")
        version, n_docs, n_terms = struct.unpack("<IQQ", f.read(20))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported index version {version}")
        (vlen,) = struct.unpack("<I", f.read(4))
        vocab_hash = f.read(vlen).decode("utf-8")
        (dk,) = struct.unpack("<q", f.read(8))
        (dlen,) = struct.unpack("<Q", f.read(8))
        doc_ids = tuple(json.loads(f.read(dlen).decode("utf-8")))
        postings = {}
        for _ in range(n_terms):
            t, length = struct.unpack("<qQ", f.read(16))
            deltas = np.frombuffer(f.read(length * 8), dtype="<i8")
            weights = np.frombuffer(f.read(length * 8), dtype="<f8").copy()
            postings[int(t)] = (np.cumsum(deltas, dtype=np.int64), weights)
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after posting blocks")
    if len(doc_ids) != n_docs:
        raise DataError(f"{path}: doc-id map does not match the header count")
    return InvertedIndex(doc_ids=doc_ids, postings=postings, dk=dk, vocab_hash=vocab_hash)

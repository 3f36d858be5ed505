"""Toy sparse encoder: subword embeddings, one mean-context tanh layer, and a
linear head over the expanded vocabulary, pooled into a sparse vector.

Forward pass for tokens t_1..t_L:

    e_i     = embedding[t_i]
    hidden_i = tanh(mix_weight @ (e_i + mean_j e_j) + mix_bias)
    logits_i = head_weight @ hidden_i + head_bias
    pooled_t = max_i log(1 + relu(logits[i, t]))

Terms with pooled weight 0 are absent from the sparse vector. Max pooling
routes gradient to a single argmax position (ties -> lowest position index);
the relu gradient at 0 is 0. All arithmetic is float64.

The expanded head can be constructed from a base head over the subword
vocabulary by mean-pooling each term's constituent subword rows and biases.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .sparsevec import SparseVec
from .vocab import ExpandedVocab

DEFAULT_MAX_LEN = 64

_MAGIC = b"LSRCKPT1"
_PARAM_ORDER = ("embedding", "mix_weight", "mix_bias", "head_weight", "head_bias")


@dataclass
class ModelParams:
    """All trainable parameters, float64.

    ``subword_hash`` / ``expanded_hash`` identify the vocabularies the model
    was built against and travel with checkpoints.
    """

    embedding: np.ndarray   # (S, h)
    mix_weight: np.ndarray  # (h, h)
    mix_bias: np.ndarray    # (h,)
    head_weight: np.ndarray  # (U, h)
    head_bias: np.ndarray   # (U,)
    max_len: int = DEFAULT_MAX_LEN
    subword_hash: str = ""
    expanded_hash: str = ""

    def __post_init__(self):
        for name in _PARAM_ORDER:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        s, h = self.embedding.shape
        if self.mix_weight.shape != (h, h) or self.mix_bias.shape != (h,):
            raise DataError("context layer dimensions inconsistent with hidden width")
        u, h2 = self.head_weight.shape
        if h2 != h or self.head_bias.shape != (u,):
            raise DataError("head dimensions inconsistent with hidden width")
        if self.max_len < 1:
            raise DataError("max_len must be >= 1")
        for name in _PARAM_ORDER:
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"non-finite values in parameter {name}")

    @property
    def subword_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def hidden(self) -> int:
        return self.embedding.shape[1]

    @property
    def u_size(self) -> int:
        return self.head_weight.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_ORDER}

    def copy(self) -> "ModelParams":
        return replace(self, **{n: getattr(self, n).copy() for n in _PARAM_ORDER})

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {n: np.zeros_like(getattr(self, n)) for n in _PARAM_ORDER}


@dataclass(frozen=True)
class EncoderOutput:
    token_logits: np.ndarray  # (L, U)
    pooled: SparseVec
    truncated: bool = False


def init_random(
    subword_size: int,
    u_size: int,
    hidden: int,
    seed: int,
    max_len: int = DEFAULT_MAX_LEN,
    subword_hash: str = "",
    expanded_hash: str = "",
) -> ModelParams:
    """All parameters uniform on [-1/sqrt(h), 1/sqrt(h)], deterministic under seed."""
    if hidden < 1 or subword_size < 1 or u_size < 1:
        raise DataError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(hidden)

    def draw(*shape):
        return rng.uniform(-scale, scale, size=shape)

    return ModelParams(
        embedding=draw(subword_size, hidden),
        mix_weight=draw(hidden, hidden),
        mix_bias=draw(hidden),
        head_weight=draw(u_size, hidden),
        head_bias=draw(u_size),
        max_len=max_len,
        subword_hash=subword_hash,
        expanded_hash=expanded_hash,
    )


def init_emlm_head(
    base_head_weight: np.ndarray,
    base_head_bias: np.ndarray,
    uvocab: ExpandedVocab,
) -> tuple[np.ndarray, np.ndarray]:
    """Expanded head rows/biases as arithmetic means of constituent subword rows.

    A single-subword term copies its base row verbatim.
    """
    base_head_weight = np.asarray(base_head_weight, dtype=np.float64)
    base_head_bias = np.asarray(base_head_bias, dtype=np.float64)
    n_sub = base_head_weight.shape[0]
    head_weight = np.empty((len(uvocab), base_head_weight.shape[1]), dtype=np.float64)
    head_bias = np.empty(len(uvocab), dtype=np.float64)
    for tid, entry in enumerate(uvocab.terms):
        ids = np.asarray(entry.decomposition, dtype=np.int64)
        if ids.size == 0:
            raise DataError(f"term {entry.term!r} has an empty decomposition")
        if np.any(ids < 0) or np.any(ids >= n_sub):
            raise DataError(f"term {entry.term!r} references an out-of-range subword id")
        head_weight[tid] = base_head_weight[ids].mean(axis=0)
        head_bias[tid] = base_head_bias[ids].mean()
    return head_weight, head_bias


def _prepare_tokens(tokens: Sequence[int], params: ModelParams) -> tuple[np.ndarray, bool]:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise DataError("token sequence must be nonempty")
    if np.any(ids < 0) or np.any(ids >= params.subword_size):
        raise DataError("token id out of range for the embedding table")
    truncated = ids.size > params.max_len
    if truncated:
        ids = ids[: params.max_len]
    return ids, truncated


def _forward(ids: np.ndarray, params: ModelParams):
    """Returns (x, hidden, logits) with x_i = e_i + mean_j e_j."""
    emb = params.embedding[ids]                      # (L, h)
    x = emb + emb.mean(axis=0)                       # (L, h)
    hidden = np.tanh(x @ params.mix_weight.T + params.mix_bias)
    logits = hidden @ params.head_weight.T + params.head_bias
    return x, hidden, logits


def _pool(logits: np.ndarray) -> np.ndarray:
    """Dense pooled vector: max over positions of log1p(relu(logits))."""
    return np.log1p(np.maximum(logits, 0.0)).max(axis=0)


def encode(tokens: Sequence[int], params: ModelParams) -> EncoderOutput:
    """Forward pass; over-length input is truncated to max_len and flagged."""
    ids, truncated = _prepare_tokens(tokens, params)
    _, _, logits = _forward(ids, params)
    return EncoderOutput(
        token_logits=logits,
        pooled=SparseVec.from_dense(_pool(logits)),
        truncated=truncated,
    )


def _backward_from_logits(
    ids: np.ndarray,
    x: np.ndarray,
    hidden: np.ndarray,
    d_logits: np.ndarray,
    params: ModelParams,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate parameter gradients given d(loss)/d(token_logits)."""
    grads["head_bias"] += d_logits.sum(axis=0)
    grads["head_weight"] += d_logits.T @ hidden
    d_hidden = d_logits @ params.head_weight          # (L, h)
    d_pre = d_hidden * (1.0 - hidden * hidden)        # through tanh
    grads["mix_bias"] += d_pre.sum(axis=0)
    grads["mix_weight"] += d_pre.T @ x
    d_x = d_pre @ params.mix_weight                   # (L, h)
    d_emb = d_x + d_x.mean(axis=0)                    # mean-context term
    np.add.at(grads["embedding"], ids, d_emb)


def _route_pooled_gradient(logits: np.ndarray, d_pooled: np.ndarray) -> np.ndarray:
    """Turn a gradient on the pooled vector into one on token logits.

    Each term's gradient lands on the lowest argmax position of its raw
    logit column, scaled by d log1p(relu(z)) / dz (0 for z <= 0).
    """
    winners = np.argmax(logits, axis=0)               # first max -> lowest index
    z = logits[winners, np.arange(logits.shape[1])]
    scale = np.where(z > 0.0, 1.0 / (1.0 + np.maximum(z, 0.0)), 0.0)
    d_logits = np.zeros_like(logits)
    d_logits[winners, np.arange(logits.shape[1])] = d_pooled * scale
    return d_logits


def encode_backward(
    tokens: Sequence[int], params: ModelParams, d_pooled: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact analytic gradients of (d_pooled . pooled) w.r.t. every parameter."""
    ids, _ = _prepare_tokens(tokens, params)
    d_pooled = np.asarray(d_pooled, dtype=np.float64)
    if d_pooled.shape != (params.u_size,):
        raise DataError("upstream gradient must have shape (|U|,)")
    x, hidden, logits = _forward(ids, params)
    grads = params.zero_grads()
    _backward_from_logits(ids, x, hidden, _route_pooled_gradient(logits, d_pooled),
                          params, grads)
    return grads


@dataclass
class BatchEncoding:
    """Cached forward pass over a batch of token sequences.

    Token rows of all sequences are concatenated; ``offsets[i]:offsets[i+1]``
    delimits sequence i. ``pooled`` is dense (B, U).
    """

    ids: np.ndarray       # (sum L,)
    offsets: np.ndarray   # (B + 1,)
    x: np.ndarray         # (sum L, h)
    hidden: np.ndarray    # (sum L, h)
    logits: np.ndarray    # (sum L, U)
    pooled: np.ndarray    # (B, U)


def encode_batch(batch_tokens: Sequence[Sequence[int]], params: ModelParams) -> BatchEncoding:
    """Forward pass over many sequences with one head matmul.

    The context layer is per-sequence (the embedding mean never crosses
    sequence boundaries); pooling reduces each sequence's row block.
    """
    if not len(batch_tokens):
        raise DataError("empty batch")
    id_list = [_prepare_tokens(t, params)[0] for t in batch_tokens]
    offsets = np.zeros(len(id_list) + 1, dtype=np.int64)
    np.cumsum([len(i) for i in id_list], out=offsets[1:])
    ids = np.concatenate(id_list)
    emb = params.embedding[ids]
    x = np.empty_like(emb)
    for i in range(len(id_list)):
        seg = slice(offsets[i], offsets[i + 1])
        x[seg] = emb[seg] + emb[seg].mean(axis=0)
    hidden = np.tanh(x @ params.mix_weight.T + params.mix_bias)
    logits = hidden @ params.head_weight.T + params.head_bias
    pooled = np.maximum.reduceat(np.log1p(np.maximum(logits, 0.0)), offsets[:-1], axis=0)
    return BatchEncoding(ids, offsets, x, hidden, logits, pooled)


def encode_batch_backward(
    enc: BatchEncoding, params: ModelParams, d_pooled: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients for a batch given d(loss)/d(pooled), shape (B, U)."""
    d_logits = np.zeros_like(enc.logits)
    n_terms = enc.logits.shape[1]
    cols = np.arange(n_terms)
    for i in range(enc.pooled.shape[0]):
        seg = slice(enc.offsets[i], enc.offsets[i + 1])
        block = enc.logits[seg]
        winners = np.argmax(block, axis=0)
        z = block[winners, cols]
        scale = np.where(z > 0.0, 1.0 / (1.0 + np.maximum(z, 0.0)), 0.0)
        d_logits[enc.offsets[i] + winners, cols] = d_pooled[i] * scale
    return backward_from_logits_batch(enc, params, d_logits)


def backward_from_logits_batch(
    enc: BatchEncoding, params: ModelParams, d_logits: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients for a batch given d(loss)/d(token_logits) on all rows."""
    grads = params.zero_grads()
    grads["head_bias"] += d_logits.sum(axis=0)
    grads["head_weight"] += d_logits.T @ enc.hidden
    d_hidden = d_logits @ params.head_weight
    d_pre = d_hidden * (1.0 - enc.hidden * enc.hidden)
    grads["mix_bias"] += d_pre.sum(axis=0)
    grads["mix_weight"] += d_pre.T @ enc.x
    d_x = d_pre @ params.mix_weight
    d_emb = np.empty_like(d_x)
    for i in range(enc.pooled.shape[0]):
        seg = slice(enc.offsets[i], enc.offsets[i + 1])
        d_emb[seg] = d_x[seg] + d_x[seg].mean(axis=0)
    np.add.at(grads["embedding"], enc.ids, d_emb)
    return grads


def save_checkpoint(path, params: ModelParams) -> None:
    """Self-describing binary checkpoint; round-trips byte-exactly."""
    header = {
        "subword_size": params.subword_size,
        "u_size": params.u_size,
        "hidden": params.hidden,
        "max_len": params.max_len,
        "subword_hash": params.subword_hash,
        "expanded_hash": params.expanded_hash,
        "dtype": "<f8",
        "order": list(_PARAM_ORDER),
    }
    head_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(head_bytes)))
        f.write(head_bytes)
        for name in _PARAM_ORDER:
            arr = np.ascontiguousarray(getattr(params, name), dtype="<f8")
            f.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        (head_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(head_len).decode("utf-8"))
        s, u, h = header["subword_size"], header["u_size"], header["hidden"]
        shapes = {
            "embedding": (s, h),
            "mix_weight": (h, h),
            "mix_bias": (h,),
            "head_weight": (u, h),
            "head_bias": (u,),
        }
        arrays = {}
        for name in header["order"]:
            shape = shapes[name]
            n = int(np.prod(shape))
            buf = f.read(n * 8)
            if len(buf) != n * 8:
                raise DataError(f"{path}: truncated parameter block {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after parameter blocks")
    return ModelParams(
        max_len=header["max_len"],
        subword_hash=header["subword_hash"],
        expanded_hash=header["expanded_hash"],
        **arrays,
    )


def params_fingerprint(params: ModelParams) -> str:
    """Content hash of the parameter blocks (used in run manifests)."""
    h = hashlib.sha256()
    for name in _PARAM_ORDER:
        h.update(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())
    return h.hexdigest()

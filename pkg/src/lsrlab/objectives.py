"""Training objectives: in-batch negative ranking loss, FLOPS regularizers,
top-k logit masking, and the masked-LM pretraining loss over the expanded
vocabulary.

All functions take dense float64 batches (rows = batch elements, columns =
expanded-vocabulary terms), return the loss together with exact analytic
gradients, and use max-subtracted softmax / log-sum-exp throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class LossConfig:
    """Finetuning loss weights and optional top-k masking sizes.

    ``lambda_q``/``lambda_d`` weight the per-batch FLOPS regularizers on the
    query and document sides, ``lambda_j`` the joint regularizer. ``q_topk``
    and ``d_topk`` (0 = off) mask each query/document vector to its top-k
    entries before every loss term during training.
    """

    lambda_q: float = 0.0
    lambda_d: float = 0.0
    lambda_j: float = 0.0
    q_topk: int = 0
    d_topk: int = 0

    def __post_init__(self):
        if min(self.lambda_q, self.lambda_d, self.lambda_j) < 0:
            raise DataError("loss weights must be >= 0")
        if self.q_topk < 0 or self.d_topk < 0:
            raise DataError("top-k masking sizes must be >= 0")


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def npair_loss(q: np.ndarray, d: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """In-batch negative softmax loss over inner-product scores.

    Row i of ``q`` pairs with row i of ``d``; every other document in the
    batch serves as a negative (each counted once in the denominator).
    Returns (loss, d_loss/d_q, d_loss/d_d).
    """
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.ndim != 2 or q.shape != d.shape or q.shape[0] == 0:
        raise DataError("query and document batches must be nonempty with equal shape")
    b = q.shape[0]
    scores = q @ d.T
    shifted = scores - scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + scores.max(axis=1)
    loss = float(np.mean(lse - np.diag(scores)))
    d_scores = (_softmax_rows(scores) - np.eye(b)) / b
    return loss, d_scores @ d, d_scores.T @ q


def flops_loss(vectors: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared L2 norm of the mean batch activation per term.

    Gradient w.r.t. element (i, j) is 2 * mean_j / batch_size.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise DataError("flops_loss requires a nonempty 2-D batch")
    mean = vectors.mean(axis=0)
    loss = float(mean @ mean)
    grad = np.broadcast_to(2.0 * mean / vectors.shape[0], vectors.shape).copy()
    return loss, grad


def joint_flops_loss(
    q: np.ndarray, d: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Inner product of the query and document mean activations."""
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.ndim != 2 or d.ndim != 2 or q.shape[0] == 0 or d.shape[0] == 0:
        raise DataError("both batches must be nonempty 2-D arrays")
    if q.shape[1] != d.shape[1]:
        raise DataError("query and document batches must share the term dimension")
    mean_q = q.mean(axis=0)
    mean_d = d.mean(axis=0)
    loss = float(mean_q @ mean_d)
    dq = np.broadcast_to(mean_d / q.shape[0], q.shape).copy()
    dd = np.broadcast_to(mean_q / d.shape[0], d.shape).copy()
    return loss, dq, dd


def _topk_keep(rows: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k largest entries per row (ties -> lowest term id)."""
    keep = np.zeros(rows.shape, dtype=bool)
    term_ids = np.arange(rows.shape[1])
    for i, row in enumerate(rows):
        keep[i, np.lexsort((term_ids, -row))[:k]] = True
    return keep


def topk_mask(vec: np.ndarray, k: int) -> np.ndarray:
    """Zero all but the k largest entries per row (ties -> lowest term id).

    k = 0 or k >= number of nonzeros leaves the input unchanged. Accepts a
    single vector or a batch of rows; never modifies the input.
    """
    if k < 0:
        raise DataError("top-k size must be >= 0")
    vec = np.asarray(vec, dtype=np.float64)
    if k == 0:
        return vec.copy()
    single = vec.ndim == 1
    rows = vec[None, :] if single else vec
    out = np.where(_topk_keep(rows, k), rows, 0.0)
    return out[0] if single else out


def mlm_pretrain_loss(
    token_logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy between softmax over U and the term-id labels.

    ``token_logits`` holds one row per labeled (masked) position.
    """
    logits = np.asarray(token_logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise DataError("at least one labeled position is required")
    if labels.shape != (logits.shape[0],):
        raise DataError("labels must align with logit rows")
    p = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    loss = float(np.mean(lse - logits[np.arange(p), labels]))
    d_logits = _softmax_rows(logits)
    d_logits[np.arange(p), labels] -= 1.0
    return loss, d_logits / p


def total_finetune_loss(
    q: np.ndarray, d: np.ndarray, config: LossConfig
) -> tuple[float, dict[str, float], np.ndarray, np.ndarray]:
    """Ranking loss plus weighted FLOPS terms on (optionally masked) vectors.

    Returns (total, per-component values, d_total/d_q, d_total/d_d). The
    gradients are w.r.t. the unmasked inputs: entries dropped by top-k
    masking receive zero gradient.
    """
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    q_keep = _topk_keep(q, config.q_topk) if config.q_topk else None
    d_keep = _topk_keep(d, config.d_topk) if config.d_topk else None
    qm = np.where(q_keep, q, 0.0) if q_keep is not None else q
    dm = np.where(d_keep, d, 0.0) if d_keep is not None else d

    total, dq, dd = npair_loss(qm, dm)
    parts = {"npair": total, "flops_q": 0.0, "flops_d": 0.0, "jflops": 0.0}
    if config.lambda_q:
        value, grad = flops_loss(qm)
        parts["flops_q"] = value
        total += config.lambda_q * value
        dq = dq + config.lambda_q * grad
    if config.lambda_d:
        value, grad = flops_loss(dm)
        parts["flops_d"] = value
        total += config.lambda_d * value
        dd = dd + config.lambda_d * grad
    if config.lambda_j:
        value, gq, gd = joint_flops_loss(qm, dm)
        parts["jflops"] = value
        total += config.lambda_j * value
        dq = dq + config.lambda_j * gq
        dd = dd + config.lambda_j * gd
    if q_keep is not None:
        dq = np.where(q_keep, dq, 0.0)
    if d_keep is not None:
        dd = np.where(d_keep, dd, 0.0)
    return total, parts, dq, dd

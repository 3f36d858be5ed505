"""Optimization loops for masked pretraining and ranking finetuning.

AdamW with decoupled weight decay drives both loops; the learning rate ramps
linearly from 0 over the warmup steps, then decays linearly toward 0 (or a
configurable floor) at the final step. Batching walks seeded shuffled epochs,
so a fixed seed reproduces every loss bit-exactly. A non-finite loss or
gradient aborts the loop with the last good parameters retained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoder import (
    ModelParams,
    backward_from_logits_batch,
    encode_batch,
    encode_batch_backward,
)
from .errors import DataError, DivergenceError
from .objectives import LossConfig, mlm_pretrain_loss, total_finetune_loss
from .vocab import (
    ExpandedVocab,
    SubwordVocab,
    TitleTokens,
    annotate_title,
    apply_masking_plan,
    plan_masking,
    tokenize,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    total_steps: int
    batch_size: int
    warmup_steps: int = 0
    weight_decay: float = 0.01
    seed: int = 0
    loss: LossConfig = LossConfig()
    eval_every: int = 100
    val_fraction: float = 0.1
    lr_floor: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning rate must be > 0")
        if self.total_steps < 0 or self.warmup_steps > self.total_steps:
            raise DataError("require 0 <= warmup_steps <= total_steps")
        if self.batch_size < 1:
            raise DataError("batch size must be >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise DataError("val_fraction must be in [0, 1)")
        if self.eval_every < 1:
            raise DataError("eval_every must be >= 1")
        if not (0.0 <= self.lr_floor <= self.learning_rate):
            raise DataError("lr_floor must be in [0, learning_rate]")


@dataclass
class TrainState:
    step: int
    params: ModelParams
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def fresh(cls, params: ModelParams) -> "TrainState":
        return cls(step=0, params=params, m=params.zero_grads(), v=params.zero_grads())


def lr_at(step: int, config: TrainConfig) -> float:
    """Linear ramp 0 -> lr over warmup, then linear decay to the floor."""
    lr, warm, total = config.learning_rate, config.warmup_steps, config.total_steps
    if step < warm:
        return lr * step / warm
    if total <= warm:
        return lr if step <= total else config.lr_floor
    frac = (total - step) / (total - warm)
    return max(config.lr_floor, lr * frac)


def adamw_step(
    state: TrainState, grads: dict[str, np.ndarray], config: TrainConfig
) -> TrainState:
    """One AdamW update in place; the step counter advances by one.

    Decoupled decay subtracts lr_t * weight_decay * param (pre-update value).
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name}")
    lr_t = lr_at(state.step, config)
    t = state.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name, p in state.params.arrays().items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        step_vec = (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        p -= lr_t * (step_vec + config.weight_decay * p)
    state.step += 1
    return state


class _EpochSampler:
    """Sequential shuffled epochs; batches may span an epoch boundary."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.perm = rng.permutation(n)
        self.pos = 0

    def next_batch(self, size: int) -> np.ndarray:
        out = []
        while len(out) < size:
            if self.pos == self.n:
                self.perm = self.rng.permutation(self.n)
                self.pos = 0
            take = min(size - len(out), self.n - self.pos)
            out.extend(self.perm[self.pos : self.pos + take])
            self.pos += take
        return np.array(out, dtype=np.int64)


def _params_finite(params: ModelParams) -> bool:
    return all(np.all(np.isfinite(a)) for a in params.arrays().values())


@dataclass
class FinetuneResult:
    last_params: ModelParams
    best_params: ModelParams
    best_r_at_10: float
    best_step: int
    metric_log: list[dict]
    diverged: bool = False


def _split_validation(n: int, config: TrainConfig, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = min(int(round(config.val_fraction * n)), 512, n - 1) if n > 1 else 0
    if config.val_fraction == 0.0:
        n_val = 0
    return perm[n_val:], perm[:n_val]


def _rank_own_doc_recall(q_pooled: np.ndarray, d_pooled: np.ndarray, k: int) -> float:
    """Fraction of rows whose paired doc lands in the top-k (ties -> lower id)."""
    scores = q_pooled @ d_pooled.T
    hits = 0
    n = scores.shape[0]
    for i in range(n):
        order = np.lexsort((np.arange(n), -scores[i]))[:k]
        hits += int(i in order)
    return hits / n


def run_finetune(
    pairs: Sequence[tuple[str, str]],
    subvocab: SubwordVocab,
    uvocab: ExpandedVocab,
    params: ModelParams,
    config: TrainConfig,
) -> FinetuneResult:
    """Finetune on (query, positive title) pairs with the combined loss.

    Logs per-step loss components and per-eval-interval L0/R@10 on a held-out
    split; returns the best-R@10 and last parameter sets.
    """
    if not len(pairs):
        raise DataError("finetuning dataset must be nonempty")
    if len(uvocab) != params.u_size:
        raise DataError("expanded vocabulary size does not match the model head")
    tokens = [
        (tokenize(q, subvocab) or [subvocab.unk_id], tokenize(d, subvocab) or [subvocab.unk_id])
        for q, d in pairs
    ]
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = _split_validation(len(pairs), config, rng)
    sampler = _EpochSampler(len(train_idx), rng)

    state = TrainState.fresh(params.copy())
    last_good = state.params.copy()
    best_params = state.params.copy()
    best_r, best_step = -1.0, 0
    log: list[dict] = []
    diverged = False

    def run_eval(step: int) -> None:
        nonlocal best_r, best_step, best_params
        if not val_idx.size:
            return
        q_pooled = encode_batch([tokens[i][0] for i in val_idx], state.params).pooled
        d_pooled = encode_batch([tokens[i][1] for i in val_idx], state.params).pooled
        l0_q = float(np.mean((q_pooled > 0).sum(axis=1)))
        l0_d = float(np.mean((d_pooled > 0).sum(axis=1)))
        r10 = _rank_own_doc_recall(q_pooled, d_pooled, 10)
        log.append({"step": step, "l0_q": l0_q, "l0_d": l0_d, "r_at_10": r10})
        if r10 > best_r:
            best_r, best_step = r10, step
            best_params = state.params.copy()

    for step in range(config.total_steps):
        batch = train_idx[sampler.next_batch(config.batch_size)]
        q_enc = encode_batch([tokens[i][0] for i in batch], state.params)
        d_enc = encode_batch([tokens[i][1] for i in batch], state.params)
        loss, parts, dq, dd = total_finetune_loss(q_enc.pooled, d_enc.pooled, config.loss)
        lr_t = lr_at(step, config)
        if not np.isfinite(loss):
            diverged = True
            break
        log.append({"step": step, "loss": loss, "lr": lr_t, **parts})
        grads = encode_batch_backward(q_enc, state.params, dq)
        for name, g in encode_batch_backward(d_enc, state.params, dd).items():
            grads[name] += g
        try:
            adamw_step(state, grads, config)
        except DivergenceError:
            diverged = True
            break
        if _params_finite(state.params):
            last_good = state.params.copy()
        else:
            diverged = True
            break
        if (step + 1) % config.eval_every == 0 or step + 1 == config.total_steps:
            run_eval(step + 1)

    final = state.params if not diverged else last_good
    if best_r < 0:  # no validation evals ran
        best_params, best_step = final.copy(), state.step
    return FinetuneResult(
        last_params=final,
        best_params=best_params,
        best_r_at_10=max(best_r, 0.0),
        best_step=best_step,
        metric_log=log,
        diverged=diverged,
    )


@dataclass
class PretrainResult:
    last_params: ModelParams
    best_params: ModelParams
    best_val_loss: float
    best_step: int
    loss_log: list[dict]
    skipped_titles: int
    diverged: bool = False


def _truncate_title(title: TitleTokens, max_len: int) -> TitleTokens:
    if len(title.tokens) <= max_len:
        return title
    kept = tuple(o for o in title.occurrences if o.end <= max_len)
    return TitleTokens(title.tokens[:max_len], kept)


def _masked_batch(
    titles: Sequence[TitleTokens],
    subvocab: SubwordVocab,
    rng: np.random.Generator,
) -> tuple[list[list[int]], list[tuple[int, int]], list[int]]:
    """Apply fresh masking plans; returns (token seqs, (seq, pos) pairs, labels)."""
    seqs: list[list[int]] = []
    where: list[tuple[int, int]] = []
    labels: list[int] = []
    for si, title in enumerate(titles):
        plan = plan_masking(title, subvocab, rng)
        toks, positions, labs = apply_masking_plan(title, plan, subvocab)
        seqs.append(toks)
        where.extend((si, p) for p in positions)
        labels.extend(labs)
    return seqs, where, labels


def _mlm_batch_loss(
    titles: Sequence[TitleTokens],
    subvocab: SubwordVocab,
    params: ModelParams,
    rng: np.random.Generator,
    want_grads: bool,
):
    seqs, where, labels = _masked_batch(titles, subvocab, rng)
    enc = encode_batch(seqs, params)
    rows = np.array([enc.offsets[si] + p for si, p in where], dtype=np.int64)
    loss, d_rows = mlm_pretrain_loss(enc.logits[rows], np.array(labels, dtype=np.int64))
    if not want_grads:
        return loss, None
    d_logits = np.zeros_like(enc.logits)
    np.add.at(d_logits, rows, d_rows)
    return loss, backward_from_logits_batch(enc, params, d_logits)


def run_pretrain(
    corpus: Sequence[str],
    subvocab: SubwordVocab,
    uvocab: ExpandedVocab,
    params: ModelParams,
    config: TrainConfig,
) -> PretrainResult:
    """Masked pretraining over titles; titles without any expanded-vocabulary
    occurrence are skipped and counted."""
    annotated = []
    skipped = 0
    for text in corpus:
        title = _truncate_title(annotate_title(text, subvocab, uvocab), params.max_len)
        if title.occurrences:
            annotated.append(title)
        else:
            skipped += 1
    if not annotated:
        raise DataError("every title lacks expanded-vocabulary occurrences")
    if len(uvocab) != params.u_size:
        raise DataError("expanded vocabulary size does not match the model head")

    rng = np.random.default_rng(config.seed)
    mask_rng = np.random.default_rng([config.seed, 1])
    train_idx, val_idx = _split_validation(len(annotated), config, rng)
    sampler = _EpochSampler(len(train_idx), rng)

    state = TrainState.fresh(params.copy())
    last_good = state.params.copy()
    best_params = state.params.copy()
    best_val, best_step = np.inf, 0
    log: list[dict] = []
    diverged = False

    def run_eval(step: int) -> None:
        nonlocal best_val, best_step, best_params
        if not val_idx.size:
            return
        val_titles = [annotated[i] for i in val_idx]
        # fixed rng: the same validation masks every interval
        loss, _ = _mlm_batch_loss(
            val_titles, subvocab, state.params, np.random.default_rng([config.seed, 2]), False
        )
        log.append({"step": step, "val_loss": loss})
        if loss < best_val:
            best_val, best_step = loss, step
            best_params = state.params.copy()

    for step in range(config.total_steps):
        batch = train_idx[sampler.next_batch(config.batch_size)]
        titles = [annotated[i] for i in batch]
        loss, grads = _mlm_batch_loss(titles, subvocab, state.params, mask_rng, True)
        lr_t = lr_at(step, config)
        if not np.isfinite(loss):
            diverged = True
            break
        log.append({"step": step, "loss": loss, "lr": lr_t})
        try:
            adamw_step(state, grads, config)
        except DivergenceError:
            diverged = True
            break
        if _params_finite(state.params):
            last_good = state.params.copy()
        else:
            diverged = True
            break
        if (step + 1) % config.eval_every == 0 or step + 1 == config.total_steps:
            run_eval(step + 1)

    final = state.params if not diverged else last_good
    if not np.isfinite(best_val):
        best_params, best_step = final.copy(), state.step
    return PretrainResult(
        last_params=final,
        best_params=best_params,
        best_val_loss=float(best_val) if np.isfinite(best_val) else float("nan"),
        best_step=best_step,
        loss_log=log,
        skipped_titles=skipped,
        diverged=diverged,
    )

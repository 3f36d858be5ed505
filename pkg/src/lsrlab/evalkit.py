"""Ranking metrics, labeled evaluation sets, a cluster-model synthetic data
generator, and the end-to-end evaluation bundle.

The generator builds a latent-cluster corpus: each cluster owns a Zipf-like
word distribution; queries average 2.6 words and titles 13.4 words. Eval
queries are stratified into overlap quantiles by the literal query-title
term-match ratio, and hard negatives come from other clusters but must match
the query above a configurable ratio, so naive lexical matching is punished.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import index as index_mod
from .encoder import ModelParams, encode_batch
from .errors import DataError
from .retrieval import flops_metric, search
from .sparsevec import PruneConfig, SparseVec, l0_report
from .vocab import ExpandedVocab, SubwordVocab, tokenize


@dataclass(frozen=True)
class EvalQuery:
    query_id: str
    text: str
    positives: tuple[str, ...]
    negatives: tuple[str, ...]


@dataclass(frozen=True)
class EvalSet:
    """Queries with labeled positive/negative doc ids over a doc collection."""

    queries: tuple[EvalQuery, ...]
    docs: dict[str, str]  # doc id -> text

    def __post_init__(self):
        for q in self.queries:
            for d in q.positives + q.negatives:
                if d not in self.docs:
                    raise DataError(f"query {q.query_id}: unknown doc id {d}")
            if set(q.positives) & set(q.negatives):
                raise DataError(f"query {q.query_id}: positives and negatives overlap")


def mrr_at_k(ranked_ids: Sequence, positives: Sequence, k: int = 10) -> float:
    """Reciprocal rank of the first positive within the top k, else 0."""
    pos = set(positives)
    if not pos:
        raise DataError("positives must be nonempty")
    for rank, doc in enumerate(ranked_ids[:k], start=1):
        if doc in pos:
            return 1.0 / rank
    return 0.0


def recall_at_k(ranked_ids: Sequence, positives: Sequence, k: int) -> float:
    """Fraction of positives retrieved within the top k."""
    pos = set(positives)
    if not pos:
        raise DataError("positives must be nonempty")
    return len(set(ranked_ids[:k]) & pos) / len(pos)


def chance_recall(k: int, n_docs: int) -> float:
    """Expected recall@k of a uniformly random ranking."""
    return min(1.0, k / n_docs)


@dataclass(frozen=True)
class MetricReport:
    mrr_at_10: float
    r_at_10: float
    r_at_100: float
    per_query: tuple[dict, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class EvalReport:
    """One pruning operating point: quality metrics plus retrieval cost."""

    qk: int
    dk: int
    l0_q: float
    l0_d: float
    flops: float
    metrics: MetricReport

    def to_row(self) -> dict:
        return {
            "qk": self.qk,
            "dk": self.dk,
            "l0_q": self.l0_q,
            "l0_d": self.l0_d,
            "flops": self.flops,
            "mrr_at_10": self.metrics.mrr_at_10,
            "r_at_10": self.metrics.r_at_10,
            "r_at_100": self.metrics.r_at_100,
        }


# ---------------------------------------------------------------------------
# Synthetic data generation
# ---------------------------------------------------------------------------

_QUANTILE_NAMES = ("low", "middle", "high")


@dataclass(frozen=True)
class SynthConfig:
    """Latent-cluster generator settings.

    ``overlap_quantiles`` gives (lo, hi) literal match-ratio ranges for the
    low/middle/high strata; ``negative_min_match`` is the minimum query
    term-match ratio a hard negative must reach (the threshold is exposed
    here, not fixed).
    """

    clusters: int = 8
    words_per_cluster: int = 50
    n_train_pairs: int = 200
    n_eval_queries: int = 30
    positives_per_query: int = 2
    negatives_per_query: int = 4
    n_distractor_docs: int = 0
    query_len_mean: float = 2.6
    title_len_mean: float = 13.4
    overlap_quantiles: tuple[tuple[float, float], ...] = (
        (0.0, 0.34),
        (0.34, 0.67),
        (0.67, 1.0),
    )
    negative_min_match: float = 0.34
    zipf_exponent: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 2:
            raise DataError("need at least 2 clusters")
        if self.positives_per_query > 3 or self.positives_per_query < 1:
            raise DataError("positives per query must be 1..3")
        if self.negatives_per_query > 10 or self.negatives_per_query < 1:
            raise DataError("negatives per query must be 1..10")
        if len(self.overlap_quantiles) != 3:
            raise DataError("exactly three overlap quantiles (low, middle, high)")
        for name, (lo, hi) in zip(_QUANTILE_NAMES, self.overlap_quantiles):
            if not (0.0 <= lo < hi <= 1.0):
                raise DataError(f"infeasible overlap range for quantile '{name}'")
        if not (0.0 < self.negative_min_match <= 1.0):
            raise DataError("negative_min_match must be in (0, 1]")


@dataclass(frozen=True)
class SynthData:
    train_pairs: tuple[tuple[str, str], ...]
    evalset: EvalSet
    cluster_words: tuple[tuple[str, ...], ...] = field(repr=False, default=())

    def corpus_titles(self) -> list[str]:
        """All document texts plus train titles (the pretraining corpus)."""
        return list(self.evalset.docs.values()) + [d for _, d in self.train_pairs]


def _make_cluster_words(cfg: SynthConfig, rng: np.random.Generator) -> list[list[str]]:
    """Distinct random letter words (4-7 chars) partitioned into clusters."""
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    seen: set[str] = set()
    words: list[str] = []
    need = cfg.clusters * cfg.words_per_cluster
    while len(words) < need:
        length = int(rng.integers(4, 8))
        w = "".join(letters[rng.integers(0, 26, size=length)])
        if w not in seen:
            seen.add(w)
            words.append(w)
    return [
        words[c * cfg.words_per_cluster : (c + 1) * cfg.words_per_cluster]
        for c in range(cfg.clusters)
    ]


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** exponent
    return p / p.sum()


def _sample_len(mean: float, rng: np.random.Generator) -> int:
    # shifted Poisson keeps the requested mean with a hard floor of 1
    return 1 + int(rng.poisson(max(mean - 1.0, 0.0)))


class _ClusterSampler:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.words = _make_cluster_words(cfg, rng)
        self.probs = _zipf_probs(cfg.words_per_cluster, cfg.zipf_exponent)

    def query_words(self, cluster: int) -> list[str]:
        n = min(_sample_len(self.cfg.query_len_mean, self.rng), self.cfg.words_per_cluster)
        picks = self.rng.choice(
            self.cfg.words_per_cluster, size=n, replace=False, p=self.probs
        )
        return [self.words[cluster][i] for i in picks]

    def title_words(
        self, cluster: int, include: list[str], exclude: set[str], min_len: int = 1
    ) -> list[str]:
        """A title containing ``include`` exactly, padded from the cluster
        distribution minus ``exclude``, shuffled."""
        length = max(_sample_len(self.cfg.title_len_mean, self.rng), len(include), min_len)
        fill = length - len(include)
        words = list(include)
        if fill > 0:
            avail = [i for i, w in enumerate(self.words[cluster]) if w not in exclude]
            if not avail:
                raise DataError("words_per_cluster too small to pad titles")
            p = self.probs[avail]
            p = p / p.sum()
            picks = self.rng.choice(avail, size=fill, replace=True, p=p)
            words.extend(self.words[cluster][i] for i in picks)
        order = self.rng.permutation(len(words))
        return [words[i] for i in order]


def generate_synthetic(cfg: SynthConfig) -> SynthData:
    """Build (train pairs, eval set) from the latent-cluster model.

    Eval queries cycle through the overlap quantiles; each query's positives
    realize a match ratio inside its quantile range and its hard negatives
    come from a different cluster with match ratio >= negative_min_match.
    """
    rng = np.random.default_rng(cfg.seed)
    sampler = _ClusterSampler(cfg, rng)

    doc_texts: dict[str, str] = {}

    def add_doc(words: list[str]) -> str:
        doc_id = f"d{len(doc_texts):06d}"
        doc_texts[doc_id] = " ".join(words)
        return doc_id

    queries: list[EvalQuery] = []
    for qi in range(cfg.n_eval_queries):
        cluster = int(rng.integers(cfg.clusters))
        q_words = sampler.query_words(cluster)
        name = _QUANTILE_NAMES[qi % 3]
        lo, hi = cfg.overlap_quantiles[qi % 3]
        q_set = set(q_words)

        positives = []
        for _ in range(cfg.positives_per_query):
            ratio = rng.uniform(lo, hi)
            m = int(round(ratio * len(q_words)))
            m = min(max(m, 1 if name == "high" else 0), len(q_words))
            matched = [q_words[i] for i in rng.choice(len(q_words), size=m, replace=False)]
            title = sampler.title_words(cluster, matched, q_set)
            positives.append(add_doc(title))

        negatives = []
        m_neg = int(np.ceil(cfg.negative_min_match * len(q_words)))
        if m_neg > len(q_words):
            raise DataError(
                f"infeasible overlap for quantile '{name}': negatives need "
                f"{m_neg} matched terms but the query has {len(q_words)}"
            )
        for _ in range(cfg.negatives_per_query):
            other = int(rng.integers(cfg.clusters - 1))
            other = other + 1 if other >= cluster else other
            matched = [q_words[i] for i in rng.choice(len(q_words), size=m_neg, replace=False)]
            title = sampler.title_words(other, matched, q_set)
            negatives.append(add_doc(title))

        queries.append(
            EvalQuery(f"q{qi:05d}", " ".join(q_words), tuple(positives), tuple(negatives))
        )

    for _ in range(cfg.n_distractor_docs):
        cluster = int(rng.integers(cfg.clusters))
        add_doc(sampler.title_words(cluster, [], set()))

    train_pairs = []
    for ti in range(cfg.n_train_pairs):
        cluster = int(rng.integers(cfg.clusters))
        q_words = sampler.query_words(cluster)
        lo, hi = cfg.overlap_quantiles[ti % 3]
        ratio = rng.uniform(lo, hi)
        m = min(max(int(round(ratio * len(q_words))), 1), len(q_words))
        matched = [q_words[i] for i in rng.choice(len(q_words), size=m, replace=False)]
        title = sampler.title_words(cluster, matched, set(q_words))
        train_pairs.append((" ".join(q_words), " ".join(title)))

    evalset = EvalSet(queries=tuple(queries), docs=doc_texts)
    return SynthData(
        train_pairs=tuple(train_pairs),
        evalset=evalset,
        cluster_words=tuple(tuple(w) for w in sampler.words),
    )


def match_ratio(query_text: str, title_text: str) -> float:
    """Fraction of distinct query words literally present in the title."""
    q = set(query_text.split())
    if not q:
        return 0.0
    return len(q & set(title_text.split())) / len(q)


# ---------------------------------------------------------------------------
# EvalSet serialization
# ---------------------------------------------------------------------------


def write_evalset(queries_path, docs_path, evalset: EvalSet) -> None:
    with open(queries_path, "w", encoding="utf-8") as f:
        for q in evalset.queries:
            f.write(
                json.dumps(
                    {
                        "query_id": q.query_id,
                        "text": q.text,
                        "positives": list(q.positives),
                        "negatives": list(q.negatives),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    with open(docs_path, "w", encoding="utf-8") as f:
        for doc_id, text in evalset.docs.items():
            f.write(json.dumps({"doc_id": doc_id, "text": text}, ensure_ascii=False) + "\n")


def read_evalset(queries_path, docs_path) -> EvalSet:
    docs: dict[str, str] = {}
    with open(docs_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                docs[obj["doc_id"]] = obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{docs_path}:{lineno}: bad docs record") from e
    queries = []
    with open(queries_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                queries.append(
                    EvalQuery(
                        obj["query_id"],
                        obj["text"],
                        tuple(obj["positives"]),
                        tuple(obj["negatives"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{queries_path}:{lineno}: bad query record") from e
    return EvalSet(queries=tuple(queries), docs=docs)


# ---------------------------------------------------------------------------
# End-to-end evaluation
# ---------------------------------------------------------------------------


def encode_texts(
    texts: Sequence[str],
    subvocab: SubwordVocab,
    params: ModelParams,
    chunk: int = 64,
) -> list[SparseVec]:
    """Encode texts to sparse vectors in chunks; empty text encodes as UNK."""
    out: list[SparseVec] = []
    for start in range(0, len(texts), chunk):
        part = texts[start : start + chunk]
        toks = [tokenize(t, subvocab) or [subvocab.unk_id] for t in part]
        pooled = encode_batch(toks, params).pooled
        out.extend(SparseVec.from_dense(row) for row in pooled)
    return out


def evaluate(
    params: ModelParams,
    subvocab: SubwordVocab,
    uvocab: ExpandedVocab,
    evalset: EvalSet,
    cfg: PruneConfig,
    k_list: Sequence[int] = (10, 100),
    doc_vectors: Sequence[tuple[str, SparseVec]] | None = None,
) -> EvalReport:
    """Encode, prune, index, search, and report quality plus retrieval cost.

    ``doc_vectors`` may carry pre-encoded documents (same model) to avoid
    re-encoding across grid points. Vocabulary hashes are checked when
    both the model and this call carry them.
    """
    if params.subword_hash and params.subword_hash != subvocab.content_hash():
        raise DataError("checkpoint was built against a different subword vocabulary")
    if params.expanded_hash and params.expanded_hash != uvocab.content_hash():
        raise DataError("checkpoint was built against a different expanded vocabulary")
    if len(uvocab) != params.u_size:
        raise DataError("expanded vocabulary size does not match the model head")

    doc_ids = list(evalset.docs.keys())
    if doc_vectors is None:
        vecs = encode_texts([evalset.docs[d] for d in doc_ids], subvocab, params)
        doc_vectors = list(zip(doc_ids, vecs))
    idx = index_mod.build(doc_vectors, dk=cfg.dk, vocab_hash=params.expanded_hash)

    q_texts = [q.text for q in evalset.queries]
    q_vecs = encode_texts(q_texts, subvocab, params)

    report = l0_report(q_vecs, [v for _, v in doc_vectors], cfg)
    flops = flops_metric(idx, list(zip([q.query_id for q in evalset.queries], q_vecs)), cfg.qk)

    k_max = max(max(k_list), 10)
    per_query = []
    for q, vec in zip(evalset.queries, q_vecs):
        result = search(idx, vec, cfg.qk, k_max)
        ranked = [doc for doc, _ in result.hits]
        row = {"query_id": q.query_id, "mrr_at_10": mrr_at_k(ranked, q.positives, 10)}
        for k in k_list:
            row[f"r_at_{k}"] = recall_at_k(ranked, q.positives, k)
        per_query.append(row)

    def mean_of(key: str) -> float:
        if key not in per_query[0]:
            return float("nan")
        return float(np.mean([row[key] for row in per_query]))

    metrics = MetricReport(
        mrr_at_10=mean_of("mrr_at_10"),
        r_at_10=mean_of("r_at_10"),
        r_at_100=mean_of("r_at_100"),
        per_query=tuple(per_query),
    )
    return EvalReport(
        qk=cfg.qk, dk=cfg.dk, l0_q=report.l0_q, l0_d=report.l0_d, flops=flops,
        metrics=metrics,
    )

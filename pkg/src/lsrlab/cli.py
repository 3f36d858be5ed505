"""Command-line surface over the pipeline.

Every subcommand wraps one library operation, reads a flat JSON key-value
config file (flags override config values), writes its outputs atomically,
and drops a ``<artifact>.manifest.json`` recording the resolved config and
input hashes so any artifact can be reproduced exactly.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import encoder, evalkit, index as index_mod, retrieval, sparsevec, trainer, vocab
from .errors import DataError, DivergenceError
from .objectives import LossConfig
from .sparsevec import PruneConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit 1
    def error(self, message):
        raise _UsageError(message)


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: str, write_fn) -> None:
    """Write via a temp file + rename so failures leave no partial artifact."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require_inputs(*paths: str) -> None:
    for p in paths:
        if p and not os.path.exists(p):
            raise DataError(f"input file not found: {p}")


def _write_manifest(artifact: str, command: str, config: dict, inputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "input_hashes": {p: _sha256_file(p) for p in sorted(set(inputs)) if p},
        "version": __version__,
    }

    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")

    _atomic_write(artifact + ".manifest.json", write)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    _require_inputs(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON config: {e}") from e
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: config must be a flat JSON object")
    return cfg


def _merge(config: dict, args: argparse.Namespace, keys: list[str]) -> dict:
    """Config values filled in where flags were left at None."""
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else config.get(key)
    return out


def _seed_of(merged: dict) -> int:
    if merged.get("seed") is None:
        raise DataError("a seed is mandatory (use --seed or the config file)")
    return int(merged["seed"])


def _train_config(merged: dict) -> trainer.TrainConfig:
    loss = LossConfig(
        lambda_q=float(merged.get("lambda_q") or 0.0),
        lambda_d=float(merged.get("lambda_d") or 0.0),
        lambda_j=float(merged.get("lambda_j") or 0.0),
        q_topk=int(merged.get("q_topk") or 0),
        d_topk=int(merged.get("d_topk") or 0),
    )
    return trainer.TrainConfig(
        learning_rate=float(merged.get("learning_rate") or 1e-4),
        total_steps=int(merged.get("total_steps") or 0),
        batch_size=int(merged.get("batch_size") or 32),
        warmup_steps=int(merged.get("warmup_steps") or 0),
        weight_decay=float(merged.get("weight_decay", 0.01) if merged.get("weight_decay") is not None else 0.01),
        seed=_seed_of(merged),
        loss=loss,
        eval_every=int(merged.get("eval_every") or 100),
        val_fraction=float(merged.get("val_fraction", 0.1) if merged.get("val_fraction") is not None else 0.1),
        lr_floor=float(merged.get("lr_floor") or 0.0),
    )


def _load_vocabs(args):
    _require_inputs(args.subwords, args.uvocab)
    sub = vocab.SubwordVocab.load(args.subwords)
    uv = vocab.ExpandedVocab.load(args.uvocab)
    return sub, uv


def _write_jsonl(path: str, rows: list[dict]) -> None:
    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")

    _atomic_write(path, write)


def _save_checkpoint_with_manifest(path, params, command, config, inputs):
    _atomic_write(path, lambda tmp: encoder.save_checkpoint(tmp, params))
    _write_manifest(path, command, config, inputs)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_synth(args, config):
    merged = _merge(config, args, [
        "seed", "clusters", "words_per_cluster", "n_train_pairs", "n_eval_queries",
        "positives_per_query", "negatives_per_query", "n_distractor_docs",
        "negative_min_match", "include_word_pieces",
    ])
    seed = _seed_of(merged)
    defaults = evalkit.SynthConfig()
    cfg = evalkit.SynthConfig(
        clusters=int(merged.get("clusters") or defaults.clusters),
        words_per_cluster=int(merged.get("words_per_cluster") or defaults.words_per_cluster),
        n_train_pairs=int(merged.get("n_train_pairs") or defaults.n_train_pairs),
        n_eval_queries=int(merged.get("n_eval_queries") or defaults.n_eval_queries),
        positives_per_query=int(merged.get("positives_per_query") or defaults.positives_per_query),
        negatives_per_query=int(merged.get("negatives_per_query") or defaults.negatives_per_query),
        n_distractor_docs=int(merged.get("n_distractor_docs") or 0),
        negative_min_match=float(merged.get("negative_min_match") or defaults.negative_min_match),
        seed=seed,
    )
    data = evalkit.generate_synthetic(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    resolved = {**merged, "out_dir": args.out_dir}

    corpus_path = os.path.join(args.out_dir, "corpus.jsonl")
    _atomic_write(corpus_path, lambda tmp: vocab.write_corpus(tmp, data.corpus_titles()))
    _write_manifest(corpus_path, "synth", resolved, [])

    pairs_path = os.path.join(args.out_dir, "train_pairs.jsonl")
    _write_jsonl(pairs_path, [{"query": q, "title": t} for q, t in data.train_pairs])
    _write_manifest(pairs_path, "synth", resolved, [])

    queries_path = os.path.join(args.out_dir, "eval_queries.jsonl")
    docs_path = os.path.join(args.out_dir, "eval_docs.jsonl")
    evalkit.write_evalset(queries_path, docs_path, data.evalset)
    _write_manifest(queries_path, "synth", resolved, [])
    _write_manifest(docs_path, "synth", resolved, [])

    n_words = int(merged.get("include_word_pieces") or 0)
    pieces = vocab.build_subword_pieces(data.corpus_titles(), include_words=n_words)
    sub = vocab.SubwordVocab.from_pieces(pieces)
    subwords_path = os.path.join(args.out_dir, "subwords.tsv")
    _atomic_write(subwords_path, lambda tmp: sub.save(tmp))
    _write_manifest(subwords_path, "synth", resolved, [])
    print(f"synth: {len(data.evalset.docs)} docs, {len(data.evalset.queries)} eval queries, "
          f"{len(data.train_pairs)} train pairs -> {args.out_dir}")
    return EXIT_OK


def _cmd_build_vocab(args, config):
    _require_inputs(args.corpus, args.subwords)
    sub = vocab.SubwordVocab.load(args.subwords)
    titles = vocab.read_corpus(args.corpus)
    uv = vocab.build_expanded_vocab(titles, sub, args.size)
    if uv.short:
        print(f"warning: corpus has only {len(uv)} distinct unigrams "
              f"(requested {args.size})", file=sys.stderr)
    _atomic_write(args.out, lambda tmp: uv.save(tmp))
    _write_manifest(args.out, "build-vocab", {"size": args.size},
                    [args.corpus, args.subwords])
    print(f"build-vocab: {len(uv)} terms -> {args.out}")
    return EXIT_OK


def _cmd_init_emlm(args, config):
    merged = _merge(config, args, ["seed", "hidden", "max_len"])
    seed = _seed_of(merged)
    hidden = int(merged.get("hidden") or 16)
    max_len = int(merged.get("max_len") or encoder.DEFAULT_MAX_LEN)
    sub, uv = _load_vocabs(args)
    inputs = [args.subwords, args.uvocab]
    if args.base:
        _require_inputs(args.base)
        base = encoder.load_checkpoint(args.base)
        if base.u_size != len(sub):
            raise DataError("base checkpoint head must be over the subword vocabulary")
        inputs.append(args.base)
    else:
        # stand-in for a pretrained subword-head model
        base = encoder.init_random(len(sub), len(sub), hidden, seed, max_len=max_len)
    head_w, head_b = encoder.init_emlm_head(base.head_weight, base.head_bias, uv)
    params = encoder.ModelParams(
        embedding=base.embedding,
        mix_weight=base.mix_weight,
        mix_bias=base.mix_bias,
        head_weight=head_w,
        head_bias=head_b,
        max_len=base.max_len,
        subword_hash=sub.content_hash(),
        expanded_hash=uv.content_hash(),
    )
    _save_checkpoint_with_manifest(args.out, params, "init-emlm",
                                   {**merged, "base": args.base}, inputs)
    print(f"init-emlm: head {params.u_size}x{params.hidden} -> {args.out}")
    return EXIT_OK


def _init_or_load(args, merged, sub, uv):
    if args.init:
        _require_inputs(args.init)
        params = encoder.load_checkpoint(args.init)
        if params.u_size != len(uv):
            raise DataError("checkpoint head does not match the expanded vocabulary")
        return params
    hidden = int(merged.get("hidden") or 16)
    max_len = int(merged.get("max_len") or encoder.DEFAULT_MAX_LEN)
    return encoder.init_random(
        len(sub), len(uv), hidden, _seed_of(merged), max_len=max_len,
        subword_hash=sub.content_hash(), expanded_hash=uv.content_hash(),
    )


_TRAIN_KEYS = [
    "seed", "hidden", "max_len", "learning_rate", "total_steps", "batch_size",
    "warmup_steps", "weight_decay", "eval_every", "val_fraction", "lr_floor",
    "lambda_q", "lambda_d", "lambda_j", "q_topk", "d_topk",
]


def _cmd_pretrain(args, config):
    merged = _merge(config, args, _TRAIN_KEYS)
    sub, uv = _load_vocabs(args)
    _require_inputs(args.corpus)
    titles = vocab.read_corpus(args.corpus)
    params = _init_or_load(args, merged, sub, uv)
    cfg = _train_config(merged)
    result = trainer.run_pretrain(titles, sub, uv, params, cfg)
    inputs = [args.corpus, args.subwords, args.uvocab] + ([args.init] if args.init else [])
    resolved = {**merged, "init": args.init}
    _save_checkpoint_with_manifest(args.out, result.last_params, "pretrain", resolved, inputs)
    _save_checkpoint_with_manifest(_best_path(args.out), result.best_params, "pretrain",
                                   resolved, inputs)
    _write_jsonl(args.log, result.loss_log)
    _write_manifest(args.log, "pretrain", resolved, inputs)
    print(f"pretrain: {len(result.loss_log)} logged steps, "
          f"skipped {result.skipped_titles} titles -> {args.out}")
    if result.diverged:
        print("pretrain: diverged; last good checkpoint retained", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _best_path(path: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}.best{ext or '.ckpt'}"


def _cmd_finetune(args, config):
    merged = _merge(config, args, _TRAIN_KEYS)
    sub, uv = _load_vocabs(args)
    _require_inputs(args.pairs)
    pairs = []
    with open(args.pairs, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pairs.append((obj["query"], obj["title"]))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{args.pairs}:{lineno}: bad pair record") from e
    params = _init_or_load(args, merged, sub, uv)
    cfg = _train_config(merged)
    result = trainer.run_finetune(pairs, sub, uv, params, cfg)
    inputs = [args.pairs, args.subwords, args.uvocab] + ([args.init] if args.init else [])
    resolved = {**merged, "init": args.init}
    _save_checkpoint_with_manifest(args.out, result.last_params, "finetune", resolved, inputs)
    _save_checkpoint_with_manifest(_best_path(args.out), result.best_params, "finetune",
                                   resolved, inputs)
    _write_jsonl(args.log, result.metric_log)
    _write_manifest(args.log, "finetune", resolved, inputs)
    print(f"finetune: best r@10 {result.best_r_at_10:.4f} at step {result.best_step} "
          f"-> {args.out}")
    if result.diverged:
        print("finetune: diverged; last good checkpoint retained", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_encode(args, config):
    _require_inputs(args.checkpoint, args.subwords, args.texts)
    params = encoder.load_checkpoint(args.checkpoint)
    sub = vocab.SubwordVocab.load(args.subwords)
    if params.subword_hash and params.subword_hash != sub.content_hash():
        raise DataError("checkpoint was built against a different subword vocabulary")
    items = []
    with open(args.texts, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                key = "doc_id" if "doc_id" in obj else "query_id"
                items.append((str(obj[key]), obj["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{args.texts}:{lineno}: bad text record") from e
    if not items:
        raise DataError(f"{args.texts}: no records")
    vecs = evalkit.encode_texts([t for _, t in items], sub, params)
    named = list(zip([i for i, _ in items], vecs))
    _atomic_write(args.out, lambda tmp: sparsevec.write_vectors(tmp, named))
    _write_manifest(args.out, "encode", {}, [args.checkpoint, args.subwords, args.texts])
    print(f"encode: {len(named)} vectors -> {args.out}")
    return EXIT_OK


def _cmd_index(args, config):
    _require_inputs(args.vectors)
    named = sparsevec.read_vectors(args.vectors)
    idx = index_mod.build(named, dk=args.dk, threads=args.threads,
                          vocab_hash=args.vocab_hash or "")
    _atomic_write(args.out, lambda tmp: index_mod.save_index(tmp, idx))
    _write_manifest(args.out, "index", {"dk": args.dk, "threads": args.threads},
                    [args.vectors])
    stats = index_mod.posting_stats(idx)
    print(f"index: {idx.n_docs} docs, {idx.n_terms} terms, "
          f"posting length mean {stats.mean:.2f} var {stats.variance:.2f} "
          f"std {stats.std:.2f} -> {args.out}")
    return EXIT_OK


def _cmd_search(args, config):
    _require_inputs(args.index, args.queries)
    idx = index_mod.load_index(args.index)
    queries = sparsevec.read_vectors(args.queries)

    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as f:
            for qid, vec in queries:
                result = retrieval.search(idx, vec, args.qk, args.k)
                for rank, (doc, score) in enumerate(result.hits, start=1):
                    f.write(f"{qid}\t{rank}\t{doc}\t{score:.6g}\n")

    _atomic_write(args.out, write)
    _write_manifest(args.out, "search", {"qk": args.qk, "k": args.k},
                    [args.index, args.queries])
    print(f"search: {len(queries)} queries -> {args.out}")
    return EXIT_OK


def _cmd_flops(args, config):
    _require_inputs(args.index, args.queries)
    idx = index_mod.load_index(args.index)
    queries = sparsevec.read_vectors(args.queries)
    value = retrieval.flops_metric(idx, queries, args.qk)
    pruned_q = [sparsevec.prune(v, args.qk) for _, v in queries]
    report = {
        "qk": args.qk,
        "dk": idx.dk,
        "flops": value,
        "l0_q": float(np.mean([v.nnz for v in pruned_q])),
        "l0_d": float(np.mean([len(x) for x in _doc_nnz(idx)])) if False else _mean_doc_nnz(idx),
    }
    _atomic_write(args.out, lambda tmp: _dump_json(tmp, report))
    _write_manifest(args.out, "flops", {"qk": args.qk}, [args.index, args.queries])
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _mean_doc_nnz(idx: index_mod.InvertedIndex) -> float:
    counts = np.zeros(idx.n_docs, dtype=np.int64)
    for ids, _ in idx.postings.values():
        np.add.at(counts, ids, 1)
    return float(counts.mean())


def _dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _cmd_eval(args, config):
    _require_inputs(args.checkpoint, args.subwords, args.uvocab, args.queries, args.docs)
    params = encoder.load_checkpoint(args.checkpoint)
    sub = vocab.SubwordVocab.load(args.subwords)
    uv = vocab.ExpandedVocab.load(args.uvocab)
    evalset = evalkit.read_evalset(args.queries, args.docs)
    grid = _parse_grid(args.grid)
    doc_ids = list(evalset.docs.keys())
    vecs = evalkit.encode_texts([evalset.docs[d] for d in doc_ids], sub, params)
    doc_vectors = list(zip(doc_ids, vecs))
    rows = []
    for qk, dk in grid:
        report = evalkit.evaluate(params, sub, uv, evalset, PruneConfig(qk=qk, dk=dk),
                                  doc_vectors=doc_vectors)
        rows.append(report.to_row())
        print(json.dumps(rows[-1], sort_keys=True))
    _write_jsonl(args.out, rows)
    _write_manifest(args.out, "eval", {"grid": args.grid},
                    [args.checkpoint, args.subwords, args.uvocab, args.queries, args.docs])
    return EXIT_OK


def _parse_grid(spec: str) -> list[tuple[int, int]]:
    cells = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            qk, dk = part.split(",")
            cells.append((int(qk), int(dk)))
        except ValueError as e:
            raise DataError(f"bad grid cell {part!r}; expected 'qk,dk;qk,dk;...'") from e
    if not cells:
        raise DataError("empty (qk,dk) grid")
    return cells


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    p = _Parser(prog="lsrlab", description=__doc__)
    p.add_argument("--config", help="flat JSON key-value config file")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="flat JSON key-value config file")
        return sp

    sp = add("synth", _cmd_synth, "generate a synthetic corpus, train pairs, and eval set")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--clusters", type=int)
    sp.add_argument("--words-per-cluster", dest="words_per_cluster", type=int)
    sp.add_argument("--n-train-pairs", dest="n_train_pairs", type=int)
    sp.add_argument("--n-eval-queries", dest="n_eval_queries", type=int)
    sp.add_argument("--positives-per-query", dest="positives_per_query", type=int)
    sp.add_argument("--negatives-per-query", dest="negatives_per_query", type=int)
    sp.add_argument("--n-distractor-docs", dest="n_distractor_docs", type=int)
    sp.add_argument("--negative-min-match", dest="negative_min_match", type=float)
    sp.add_argument("--include-word-pieces", dest="include_word_pieces", type=int,
                    help="frequent whole words to add as single subword pieces")

    sp = add("build-vocab", _cmd_build_vocab, "build the expanded vocabulary from a corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--subwords", required=True)
    sp.add_argument("--size", type=int, required=True)
    sp.add_argument("--out", required=True)

    sp = add("init-emlm", _cmd_init_emlm, "construct an expanded head by subword mean pooling")
    sp.add_argument("--subwords", required=True)
    sp.add_argument("--uvocab", required=True)
    sp.add_argument("--base", help="checkpoint with a subword-vocabulary head")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--max-len", dest="max_len", type=int)
    sp.add_argument("--out", required=True)

    for name, fn, data_flag in (
        ("pretrain", _cmd_pretrain, "--corpus"),
        ("finetune", _cmd_finetune, "--pairs"),
    ):
        sp = add(name, fn, f"{name} a model")
        sp.add_argument(data_flag, required=True)
        sp.add_argument("--subwords", required=True)
        sp.add_argument("--uvocab", required=True)
        sp.add_argument("--init", help="initial checkpoint (omit for random init)")
        sp.add_argument("--out", required=True)
        sp.add_argument("--log", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--hidden", type=int)
        sp.add_argument("--max-len", dest="max_len", type=int)
        sp.add_argument("--learning-rate", dest="learning_rate", type=float)
        sp.add_argument("--total-steps", dest="total_steps", type=int)
        sp.add_argument("--batch-size", dest="batch_size", type=int)
        sp.add_argument("--warmup-steps", dest="warmup_steps", type=int)
        sp.add_argument("--weight-decay", dest="weight_decay", type=float)
        sp.add_argument("--eval-every", dest="eval_every", type=int)
        sp.add_argument("--val-fraction", dest="val_fraction", type=float)
        sp.add_argument("--lr-floor", dest="lr_floor", type=float)
        sp.add_argument("--lambda-q", dest="lambda_q", type=float)
        sp.add_argument("--lambda-d", dest="lambda_d", type=float)
        sp.add_argument("--lambda-j", dest="lambda_j", type=float)
        sp.add_argument("--q-topk", dest="q_topk", type=int)
        sp.add_argument("--d-topk", dest="d_topk", type=int)

    sp = add("encode", _cmd_encode, "encode texts into sparse vectors")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--subwords", required=True)
    sp.add_argument("--texts", required=True, help="JSONL with doc_id/query_id and text")
    sp.add_argument("--out", required=True)

    sp = add("index", _cmd_index, "build an inverted index from document vectors")
    sp.add_argument("--vectors", required=True)
    sp.add_argument("--dk", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--vocab-hash", dest="vocab_hash")
    sp.add_argument("--out", required=True)

    sp = add("search", _cmd_search, "run exact top-k retrieval")
    sp.add_argument("--index", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--qk", type=int, default=0)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--out", required=True)

    sp = add("flops", _cmd_flops, "compute the retrieval-cost metric")
    sp.add_argument("--index", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--qk", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("eval", _cmd_eval, "full evaluation over a (qk,dk) grid")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--subwords", required=True)
    sp.add_argument("--uvocab", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--docs", required=True)
    sp.add_argument("--grid", default="0,0", help="semicolon-separated qk,dk cells")
    sp.add_argument("--out", required=True)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        config = _load_config(getattr(args, "config", None))
        return args.fn(args, config)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

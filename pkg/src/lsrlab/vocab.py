"""Subword vocabulary, greedy longest-match tokenization, expanded unigram
vocabulary construction, and masked-pretraining plan generation.

The expanded vocabulary ``U`` is the model's output space: the most frequent
whitespace unigrams of a corpus, each stored with its subword decomposition.
Masking plans select whole-unigram occurrences (15% per title, at least one)
and cover every constituent subword position of a selected occurrence.
"""

from __future__ import annotations

import hashlib
import json
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"
CONTINUATION = "##"

# Masking plan actions
MASKED = "masked"
RANDOM = "random"
UNCHANGED = "unchanged"

MASK_RATIO = 0.15
ACTION_PROBS = (0.8, 0.1, 0.1)  # MASKED, RANDOM, UNCHANGED

_EDGE_PUNCT = string.punctuation


@dataclass(frozen=True)
class SubwordVocab:
    """Subword table with dense ids (index == id) and reserved PAD/UNK/MASK."""

    pieces: tuple[str, ...]
    pad_id: int
    unk_id: int
    mask_id: int

    def __post_init__(self):
        if len(set(self.pieces)) != len(self.pieces):
            raise DataError("duplicate subword strings")
        n = len(self.pieces)
        reserved = (self.pad_id, self.unk_id, self.mask_id)
        if len(set(reserved)) != 3 or any(not (0 <= r < n) for r in reserved):
            raise DataError("PAD, UNK, MASK ids must be distinct and in range")
        object.__setattr__(self, "_piece_to_id", {p: i for i, p in enumerate(self.pieces)})

    @classmethod
    def from_pieces(cls, pieces: Iterable[str]) -> "SubwordVocab":
        """Reserved tokens first, then the given pieces (deduplicated, order kept)."""
        seen = dict.fromkeys([PAD_TOKEN, UNK_TOKEN, MASK_TOKEN])
        for p in pieces:
            seen.setdefault(p)
        return cls(tuple(seen), pad_id=0, unk_id=1, mask_id=2)

    def __len__(self) -> int:
        return len(self.pieces)

    def lookup(self, piece: str) -> int | None:
        return self._piece_to_id.get(piece)

    @property
    def reserved_ids(self) -> frozenset[int]:
        return frozenset((self.pad_id, self.unk_id, self.mask_id))

    def non_reserved_ids(self) -> np.ndarray:
        keep = np.ones(len(self.pieces), dtype=bool)
        keep[list(self.reserved_ids)] = False
        return np.nonzero(keep)[0].astype(np.int64)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, p in enumerate(self.pieces):
                f.write(f"{p}\t{i}\n")

    @classmethod
    def load(cls, path) -> "SubwordVocab":
        entries = {}
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                piece, _, sid = line.rpartition("\t")
                try:
                    entries[int(sid)] = piece
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: bad subword id") from e
        if sorted(entries) != list(range(len(entries))):
            raise DataError(f"{path}: subword ids must be dense 0..n-1")
        pieces = tuple(entries[i] for i in range(len(entries)))
        lookup = {p: i for i, p in enumerate(pieces)}
        try:
            return cls(pieces, pad_id=lookup[PAD_TOKEN], unk_id=lookup[UNK_TOKEN],
                       mask_id=lookup[MASK_TOKEN])
        except KeyError as e:
            raise DataError(f"{path}: missing reserved token {e}") from e

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for i, p in enumerate(self.pieces):
            h.update(f"{p}\t{i}\n".encode("utf-8"))
        return h.hexdigest()


def normalize_word(word: str) -> str:
    """Lowercase and strip punctuation at the edges; may return ''."""
    return word.lower().strip(_EDGE_PUNCT)


def split_words(text: str) -> list[str]:
    """Whitespace-delimited normalized unigrams, empties dropped."""
    return [w for w in (normalize_word(t) for t in text.split()) if w]


def tokenize_word(word: str, vocab: SubwordVocab) -> list[int]:
    """Greedy longest-match segmentation of one normalized word.

    Word-internal pieces carry the continuation marker. A word with any
    unmatchable span maps to a single UNK.
    """
    ids: list[int] = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION + piece
            sid = vocab.lookup(piece)
            if sid is not None:
                match = sid
                break
            end -= 1
        if match is None:
            return [vocab.unk_id]
        ids.append(match)
        start = end
    return ids


def tokenize(text: str, vocab: SubwordVocab) -> list[int]:
    """Tokenize whitespace words independently and concatenate."""
    out: list[int] = []
    for word in split_words(text):
        out.extend(tokenize_word(word, vocab))
    return out


@dataclass(frozen=True)
class TermEntry:
    term: str
    decomposition: tuple[int, ...]
    freq: int


@dataclass(frozen=True)
class ExpandedVocab:
    """Expanded output vocabulary U, sorted by descending corpus frequency.

    ``short`` is set when the corpus had fewer distinct unigrams than requested.
    """

    terms: tuple[TermEntry, ...]
    short: bool = False

    def __post_init__(self):
        for t in self.terms:
            if not t.decomposition:
                raise DataError(f"term {t.term!r} has an empty decomposition")
        freqs = [t.freq for t in self.terms]
        if any(f1 < f2 for f1, f2 in zip(freqs, freqs[1:])):
            raise DataError("terms must be sorted by descending frequency")
        object.__setattr__(self, "_term_to_id", {t.term: i for i, t in enumerate(self.terms)})
        if len(self._term_to_id) != len(self.terms):
            raise DataError("duplicate unigram in expanded vocabulary")

    def __len__(self) -> int:
        return len(self.terms)

    def term_id(self, term: str) -> int | None:
        return self._term_to_id.get(term)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tid, t in enumerate(self.terms):
                decomp = " ".join(str(s) for s in t.decomposition)
                f.write(f"{t.term}\t{tid}\t{t.freq}\t{decomp}\n")

    @classmethod
    def load(cls, path, short: bool = False) -> "ExpandedVocab":
        rows = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields")
                term, tid, freq, decomp = parts
                rows.append((int(tid), term, int(freq), tuple(int(s) for s in decomp.split())))
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise DataError(f"{path}: term ids must be dense 0..n-1")
        return cls(tuple(TermEntry(term, decomp, freq) for _, term, freq, decomp in rows),
                   short=short)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for tid, t in enumerate(self.terms):
            decomp = " ".join(str(s) for s in t.decomposition)
            h.update(f"{t.term}\t{tid}\t{t.freq}\t{decomp}\n".encode("utf-8"))
        return h.hexdigest()


def build_expanded_vocab(
    corpus: Iterable[str], subvocab: SubwordVocab, size: int
) -> ExpandedVocab:
    """Top ``size`` most frequent unigrams, ties broken lexicographically.

    Each term is stored with its subword decomposition. A corpus with fewer
    distinct unigrams than requested returns all of them, flagged short.
    """
    if size < 1:
        raise DataError("expanded vocabulary size must be >= 1")
    counts: Counter[str] = Counter()
    nonempty = False
    for title in corpus:
        nonempty = True
        counts.update(split_words(title))
    if not nonempty or not counts:
        raise DataError("corpus is empty or contains no unigrams")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:size]
    terms = tuple(
        TermEntry(term, tuple(tokenize_word(term, subvocab)), freq)
        for term, freq in ranked
    )
    return ExpandedVocab(terms, short=len(terms) < size)


@dataclass(frozen=True)
class Occurrence:
    """One U-term occurrence: token span [start, end) and its term id."""

    term_id: int
    start: int
    end: int


@dataclass(frozen=True)
class TitleTokens:
    """A tokenized title with its U-term occurrence annotation."""

    tokens: tuple[int, ...]
    occurrences: tuple[Occurrence, ...]


def annotate_title(text: str, subvocab: SubwordVocab, uvocab: ExpandedVocab) -> TitleTokens:
    """Tokenize a title and mark each word that is an expanded-vocabulary term."""
    tokens: list[int] = []
    occurrences: list[Occurrence] = []
    for word in split_words(text):
        ids = tokenize_word(word, subvocab)
        tid = uvocab.term_id(word)
        if tid is not None:
            occurrences.append(Occurrence(tid, len(tokens), len(tokens) + len(ids)))
        tokens.extend(ids)
    return TitleTokens(tuple(tokens), tuple(occurrences))


@dataclass(frozen=True)
class MaskEntry:
    """One selected occurrence: span, action, label, and (for RANDOM) the
    replacement subword ids drawn at planning time."""

    start: int
    end: int
    action: str
    label: int
    replacement: tuple[int, ...] | None = None


@dataclass(frozen=True)
class MaskingPlan:
    entries: tuple[MaskEntry, ...]


def plan_masking(
    title: TitleTokens, subvocab: SubwordVocab, rng: np.random.Generator
) -> MaskingPlan:
    """Select max(1, floor(0.15 * n)) occurrences uniformly without replacement.

    Each selected occurrence is independently MASKED with probability 0.8,
    RANDOM 0.1, UNCHANGED 0.1; RANDOM draws one uniformly random non-reserved
    subword id per constituent position.
    """
    n = len(title.occurrences)
    if n == 0:
        raise DataError("title has no expanded-vocabulary occurrences; unusable for pretraining")
    count = max(1, (3 * n) // 20)  # floor(0.15 * n), exactly
    chosen = np.sort(rng.choice(n, size=count, replace=False))
    allowed = subvocab.non_reserved_ids()
    entries = []
    for occ_idx in chosen:
        occ = title.occurrences[occ_idx]
        r = rng.random()
        if r < ACTION_PROBS[0]:
            action, replacement = MASKED, None
        elif r < ACTION_PROBS[0] + ACTION_PROBS[1]:
            action = RANDOM
            picks = rng.integers(0, len(allowed), size=occ.end - occ.start)
            replacement = tuple(int(allowed[p]) for p in picks)
        else:
            action, replacement = UNCHANGED, None
        entries.append(MaskEntry(occ.start, occ.end, action, occ.term_id, replacement))
    return MaskingPlan(tuple(entries))


def apply_masking_plan(
    title: TitleTokens, plan: MaskingPlan, subvocab: SubwordVocab
) -> tuple[list[int], list[int], list[int]]:
    """Apply a plan to a title's tokens.

    Returns (masked token sequence, labeled positions, term-id labels); every
    constituent position of a selected occurrence is labeled with its term id.
    """
    tokens = list(title.tokens)
    positions: list[int] = []
    labels: list[int] = []
    for e in plan.entries:
        for offset, pos in enumerate(range(e.start, e.end)):
            if e.action == MASKED:
                tokens[pos] = subvocab.mask_id
            elif e.action == RANDOM:
                tokens[pos] = e.replacement[offset]
            positions.append(pos)
            labels.append(e.label)
    return tokens, positions, labels


def build_subword_pieces(corpus: Iterable[str], include_words: int = 0) -> list[str]:
    """Enumerate subword pieces that cover a corpus.

    Every character seen in a normalized word yields a word-start and a
    continuation piece, so any corpus word tokenizes without UNK; optionally
    the ``include_words`` most frequent whole words (ties lexicographic) are
    added as single pieces, leaving rarer words with multi-piece
    decompositions.
    """
    chars: set[str] = set()
    counts: Counter[str] = Counter()
    for title in corpus:
        for w in split_words(title):
            counts[w] += 1
            chars.update(w)
    pieces: list[str] = []
    for ch in sorted(chars):
        pieces.append(ch)
        pieces.append(CONTINUATION + ch)
    if include_words:
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:include_words]
        pieces.extend(w for w, _ in ranked if len(w) > 1)
    return pieces


def read_corpus(path) -> list[str]:
    """JSONL corpus with one ``{"text": ...}`` object per line."""
    titles = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                titles.append(obj["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{path}:{lineno}: bad corpus record") from e
    return titles


def write_corpus(path, titles: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in titles:
            f.write(json.dumps({"text": t}, ensure_ascii=False) + "\n")

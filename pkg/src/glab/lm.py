"""Smoothed n-gram language model with an autoregressive query surface.

The conditional P(token | context) is a Witten-Bell interpolation from the
top order down to the raw unigram estimate; whatever probability is still
exactly zero after that (tokens never seen as a continuation, e.g. the
start marker) receives a uniform share of a 1e-8 floor so log-probabilities
stay finite. Sequence probabilities are plain products of these
conditionals with start-marker padding, so the chain-rule decomposition
holds by construction.

Tables are immutable once trained; queries are safe to run concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, IoError
from .synthgen import Corpus

START = "<s>"
END = "</s>"
FLOOR_MASS = 1e-8

_PUNCT = set(".,!?;:\"'()")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split punctuation into own tokens."""
    tokens: list[str] = []
    for word in text.lower().split():
        buf = ""
        for ch in word:
            if ch in _PUNCT:
                if buf:
                    tokens.append(buf)
                    buf = ""
                tokens.append(ch)
            else:
                buf += ch
        if buf:
            tokens.append(buf)
    return tokens


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


@dataclass
class Vocabulary:
    tokens: list[str]
    ids: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.ids:
            self.ids = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        """Token id, or -1 for out-of-vocabulary tokens."""
        return self.ids.get(token, -1)

    def sequence(self, tokens: list[str]) -> "TokenSequence":
        ids = []
        for tok in tokens:
            i = self.id_of(tok)
            if i < 0:
                raise InvalidArgumentError(f"token {tok!r} not in vocabulary")
            ids.append(i)
        return TokenSequence(ids, self)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "Vocabulary":
        seen = sorted({tok for sentence in corpus.sentences for tok in sentence})
        return cls([START, END] + seen)


@dataclass
class TokenSequence:
    tokens: list[int]
    vocab: Vocabulary

    def strings(self) -> list[str]:
        return [self.vocab.tokens[i] for i in self.tokens]


@dataclass
class NgramTable:
    order: int
    vocab: Vocabulary
    # context tuple (0..order-1 ids) -> {continuation id: count}
    counts: dict[tuple[int, ...], dict[int, int]]
    totals: dict[tuple[int, ...], int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.totals:
            self.totals = {ctx: sum(c.values()) for ctx, c in self.counts.items()}

    @property
    def start_id(self) -> int:
        return self.vocab.id_of(START)

    @property
    def end_id(self) -> int:
        return self.vocab.id_of(END)


def train_ngram(corpus: Corpus, order: int) -> NgramTable:
    """Exact k-gram counts for every k <= order, with start padding."""
    if order < 1:
        raise InvalidArgumentError(f"order must be >= 1, got {order}")
    if not corpus.sentences:
        raise InvalidArgumentError("corpus must not be empty")
    vocab = Vocabulary.from_corpus(corpus)
    start, end = vocab.id_of(START), vocab.id_of(END)
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for sentence in corpus.sentences:
        if not sentence:
            raise InvalidArgumentError("corpus contains an empty sentence")
        ids = [vocab.ids[tok] for tok in sentence] + [end]
        padded = [start] * (order - 1) + ids
        for i, token in enumerate(ids):
            pos = i + order - 1
            for k in range(order):
                ctx = tuple(padded[pos - k : pos])
                bucket = counts.setdefault(ctx, {})
                bucket[token] = bucket.get(token, 0) + 1
    return NgramTable(order=order, vocab=vocab, counts=counts)


def _context_ids(table: NgramTable, context) -> list[int]:
    if isinstance(context, TokenSequence):
        return list(context.tokens)
    return [table.vocab.id_of(tok) for tok in context]


def next_token_dist(table: NgramTable, context) -> np.ndarray:
    """Conditional distribution over the full vocabulary given a context.

    `context` is a TokenSequence or a list of token strings; unknown tokens
    simply never match a stored context, so estimation backs off.
    """
    v = len(table.vocab)
    ids = [table.start_id] * (table.order - 1) + _context_ids(table, context)

    # raw unigram estimate
    uni = table.counts.get((), {})
    total = table.totals.get((), 0)
    p = np.zeros(v)
    for token, c in uni.items():
        p[token] = c / total

    # Witten-Bell interpolation, growing the context one token at a time
    for k in range(1, table.order):
        ctx = tuple(ids[len(ids) - k :])
        bucket = table.counts.get(ctx)
        if not bucket:
            continue  # unseen context: keep the backed-off distribution
        ctx_total = table.totals[ctx]
        types = len(bucket)
        higher = np.zeros(v)
        for token, c in bucket.items():
            higher[token] = c
        p = (higher + types * p) / (ctx_total + types)

    unseen = p == 0.0
    if unseen.any():
        p = p * (1.0 - FLOOR_MASS)
        p[unseen] = FLOOR_MASS / unseen.sum()
    return p


def _target_ids(table: NgramTable, seq) -> list[int]:
    ids = _context_ids(table, seq)
    if any(i < 0 for i in ids):
        raise InvalidArgumentError("sequence contains out-of-vocabulary tokens")
    return ids


def sequence_logprob(table: NgramTable, seq) -> float:
    """Natural-log probability: sum of per-step conditional log-probs."""
    ids = _target_ids(table, seq)
    if not ids:
        raise InvalidArgumentError("sequence must not be empty")
    strings = [table.vocab.tokens[i] for i in ids]
    total = 0.0
    for i, token_id in enumerate(ids):
        dist = next_token_dist(table, strings[:i])
        total += float(np.log(dist[token_id]))
    return total


def greedy_complete(table: NgramTable, prefix, max_len: int) -> TokenSequence:
    """Repeated argmax continuation; ties go to the lowest token id.

    Returns the generated tokens only (end marker excluded); stops at the
    end marker or after max_len tokens.
    """
    if max_len < 1:
        raise InvalidArgumentError("max_len must be >= 1")
    context = prefix.strings() if isinstance(prefix, TokenSequence) else list(prefix)
    generated: list[int] = []
    while len(generated) < max_len:
        dist = next_token_dist(table, context)
        token_id = int(np.argmax(dist))
        if token_id == table.end_id:
            break
        generated.append(token_id)
        context = context + [table.vocab.tokens[token_id]]
    return TokenSequence(generated, table.vocab)


def completion_prob(table: NgramTable, prefix, target) -> float:
    """Probability of the target continuation given a growing context."""
    target_ids = _target_ids(table, target)
    if not target_ids:
        raise InvalidArgumentError("target must not be empty")
    context = list(prefix.strings() if isinstance(prefix, TokenSequence) else prefix)
    prob = 1.0
    for token_id in target_ids:
        dist = next_token_dist(table, context)
        prob *= float(dist[token_id])
        context.append(table.vocab.tokens[token_id])
    return prob


def save_table(table: NgramTable, path) -> None:
    """JSON: vocabulary in id order plus flat (context..., token, count) rows."""
    records = []
    for ctx in sorted(table.counts, key=lambda c: (len(c), c)):
        for token, count in sorted(table.counts[ctx].items()):
            records.append(list(ctx) + [token, count])
    doc = {"order": table.order, "vocab": table.vocab.tokens, "counts": records}
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_table(path) -> NgramTable:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for record in doc["counts"]:
        ctx, token, count = tuple(record[:-2]), record[-2], record[-1]
        counts.setdefault(ctx, {})[token] = count
    return NgramTable(order=doc["order"], vocab=Vocabulary(doc["vocab"]), counts=counts)

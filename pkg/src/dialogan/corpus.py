"""Corpus handling: tokenization, vocabulary, splits, batches, synthesis.

Corpus files are JSON Lines: each line is a JSON array of utterance strings
making up one conversation. Vocabularies persist as plain text, one token
per line, where the line number equals the token id minus the three
reserved specials.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PAD_ID",
    "UNK_ID",
    "EOS_ID",
    "Dialogue",
    "Vocab",
    "Batch",
    "CorpusError",
    "tokenize",
    "detokenize",
    "build_vocab",
    "split_corpus",
    "make_batches",
    "load_corpus",
    "save_corpus",
    "generate_corpus",
]

PAD_ID, UNK_ID, EOS_ID = 0, 1, 2
PAD_TOKEN, UNK_TOKEN, EOS_TOKEN = "<pad>", "<unk>", "<eos>"
_SPECIALS = [PAD_TOKEN, UNK_TOKEN, EOS_TOKEN]

_TOKEN_RE = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")


class CorpusError(ValueError):
    """Malformed corpus content or invalid corpus operation."""


def tokenize(text):
    """Lowercase and split on whitespace, detaching punctuation."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens):
    return " ".join(tokens)


@dataclass
class Dialogue:
    """An ordered conversation: at least one context turn plus a response."""

    utterances: list

    def __post_init__(self):
        if len(self.utterances) < 2:
            raise CorpusError(f"dialogue needs at least 2 utterances, got {len(self.utterances)}")
        for u in self.utterances:
            if not u:
                raise CorpusError("dialogue contains an empty utterance")

    @classmethod
    def from_texts(cls, texts):
        return cls([tokenize(t) for t in texts])

    @property
    def num_turns(self):
        return len(self.utterances)


class Vocab:
    """Token table with reserved PAD=0, UNK=1, EOS=2."""

    def __init__(self, tokens):
        self.id_to_token = _SPECIALS + list(tokens)
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise CorpusError("vocabulary contains duplicate tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, tokens):
        """Map tokens to ids, substituting UNK for out-of-vocabulary tokens."""
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]

    def content_hash(self):
        return hashlib.sha256("\n".join(self.id_to_token).encode()).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.id_to_token[len(_SPECIALS):]:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


def build_vocab(dialogues, max_size):
    """Keep the max_size most frequent tokens; ties break lexicographically."""
    if not dialogues:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    counts = {}
    for d in dialogues:
        for utt in d.utterances:
            for t in utt:
                counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocab(ranked[:max_size])


def split_corpus(dialogues, fractions=(0.90, 0.05, 0.05), rng=None):
    """Shuffle deterministically and split into (train, valid, test).

    Validation and test sizes are floors of their fractions; the remainder
    goes to train.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CorpusError(f"split fractions must sum to 1, got {fractions}")
    n = len(dialogues)
    if n < 3:
        raise CorpusError(f"need at least 3 dialogues to split, got {n}")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    shuffled = [dialogues[i] for i in order]
    n_valid = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_valid - n_test
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_valid],
            shuffled[n_train + n_valid:])


@dataclass
class Batch:
    """Same-turn-count dialogues padded per turn.

    turns[k] is an int matrix [batch, width_k] of token ids with EOS
    appended to every utterance and PAD filling the tail; masks[k] is 1.0
    exactly where turns[k] is not PAD; lengths[k][b] counts real tokens
    (utterance plus EOS).
    """

    turns: list
    masks: list
    lengths: list

    @property
    def size(self):
        return self.turns[0].shape[0]

    @property
    def num_turns(self):
        return len(self.turns)


def _pad_turn(encoded):
    width = max(len(row) for row in encoded)
    ids = np.full((len(encoded), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(encoded), width))
    lengths = np.zeros(len(encoded), dtype=np.int64)
    for b, row in enumerate(encoded):
        ids[b, : len(row)] = row
        mask[b, : len(row)] = 1.0
        lengths[b] = len(row)
    return ids, mask, lengths


def make_batches(dialogues, batch_size, vocab):
    """Group by turn count, then emit padded batches of at most batch_size."""
    groups = {}
    for d in dialogues:
        groups.setdefault(d.num_turns, []).append(d)
    batches = []
    for turn_count in sorted(groups):
        group = groups[turn_count]
        for start in range(0, len(group), batch_size):
            chunk = group[start : start + batch_size]
            turns, masks, lengths = [], [], []
            for k in range(turn_count):
                encoded = [vocab.encode(d.utterances[k]) + [EOS_ID] for d in chunk]
                ids, mask, lens = _pad_turn(encoded)
                turns.append(ids)
                masks.append(mask)
                lengths.append(lens)
            batches.append(Batch(turns, masks, lengths))
    return batches


def load_corpus(path):
    dialogues = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                texts = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {e}") from None
            if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
                raise CorpusError(f"{path}:{lineno}: expected a JSON array of strings")
            dialogues.append(Dialogue.from_texts(texts))
    if not dialogues:
        raise CorpusError(f"{path}: corpus file contains no conversations")
    return dialogues


def save_corpus(dialogues, path):
    with open(path, "w", encoding="utf-8") as f:
        for d in dialogues:
            f.write(json.dumps([detokenize(u) for u in d.utterances]) + "\n")


# -- synthetic question/answer grammar ------------------------------------

_ADJECTIVES = ["big", "blue", "green", "new", "old", "red", "shiny", "small"]
_NOUNS = ["book", "coin", "cup", "hat", "key", "lamp", "map", "pen"]
_PLACES = ["attic", "cellar", "garage", "garden", "hall", "kitchen", "office", "shed"]


def _place_for(adj_idx, noun_idx):
    # Fixed mapping so answers are a pure function of the question.
    return _PLACES[(3 * adj_idx + 5 * noun_idx) % len(_PLACES)]


def _qa_pair(adj_idx, noun_idx):
    adj, noun = _ADJECTIVES[adj_idx], _NOUNS[noun_idx]
    question = f"where is the {adj} {noun} ?"
    answer = f"the {adj} {noun} is in the {_place_for(adj_idx, noun_idx)} ."
    return question, answer

def generate_corpus(count, rng, num_turns=2, vocab_items=None):
    """Sample templated find-the-object conversations.

    Answers are a deterministic function of the question's adjective and
    noun, so a model that can read the question can learn the corpus
    exactly. num_turns must be even: each pair of turns is one exchange.
    vocab_items caps how many distinct adjectives and nouns the template
    draws from (1-8), shrinking the vocabulary for tiny experiments.
    """
    if count < 1:
        raise CorpusError("count must be >= 1")
    if num_turns < 2 or num_turns % 2:
        raise CorpusError("num_turns must be an even number >= 2")
    items = len(_ADJECTIVES) if vocab_items is None else vocab_items
    if not 1 <= items <= len(_ADJECTIVES):
        raise CorpusError(f"vocab_items must be in 1..{len(_ADJECTIVES)}")
    dialogues = []
    for _ in range(count):
        texts = []
        for exchange in range(num_turns // 2):
            a = int(rng.integers(0, items))
            n = int(rng.integers(0, items))
            q, ans = _qa_pair(a, n)
            if exchange > 0:
                q = "and " + q
            texts.extend([q, ans])
        dialogues.append(Dialogue.from_texts(texts))
    return dialogues

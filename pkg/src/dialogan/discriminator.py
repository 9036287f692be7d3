"""Word-level bidirectional discriminator over dialogue responses.

A bidirectional GRU stack reads a candidate response token by token,
initialized from the generator's dialogue context state, and a sigmoid head
turns each position's concatenated forward/backward states into the
probability that the token comes from the ground truth. Sequence-level
scores aggregate those probabilities by geometric mean. The embedding table
is the generator's own object, so discriminator gradients flow into it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, clip, concat, sigmoid
from .layers import LinearParams, StackedRnnParams, run_rnn

__all__ = ["Discriminator", "WordScoreSequence", "sequence_score", "accuracy", "PROB_EPS"]

# Keep probabilities strictly inside (0, 1) so logs stay finite.
PROB_EPS = 1e-12


@dataclass
class WordScoreSequence:
    """Per-token ground-truth probabilities for one batch of sequences.

    probs: [batch, tokens] Tensor, every entry in (0, 1).
    mask: [batch, tokens] array; zero entries are padding and carry no
    meaning. lengths: [batch] real token counts.
    """

    probs: Tensor
    mask: np.ndarray
    lengths: np.ndarray


class Discriminator:
    """BiRNN judge sharing the generator's embedding table."""

    def __init__(self, embedding, hidden_dim, num_layers, context_dim, rng):
        self.embedding = embedding
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.word_rnn = StackedRnnParams(
            "discriminator_rnn", embedding.table.data.shape[1], hidden_dim, num_layers, rng,
            bidirectional=True)
        self.state_init = LinearParams("discriminator_state_init", context_dim, hidden_dim, rng)
        self.output_proj = LinearParams("discriminator_output", 2 * hidden_dim, 1, rng)

    def own_parameters(self):
        """Parameters unique to the discriminator (excludes shared objects)."""
        return self.word_rnn.params() + self.state_init.params() + self.output_proj.params()

    def word_probs(self, context, token_ids, mask=None):
        """Score each token of [batch, T] sequences against the context.

        context: [batch, context_dim] dialogue state (the generator's
        context RNN top state). Every RNN layer and direction starts from
        one shared projection of it.
        """
        token_ids = np.atleast_2d(np.asarray(token_ids))
        batch, steps = token_ids.shape
        if steps == 0:
            raise ShapeError("word_probs: token sequence must be nonempty")
        embedded = [self.embedding.lookup(token_ids[:, j]) for j in range(steps)]
        step_masks = None
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)
            step_masks = [Tensor(mask[:, j : j + 1]) for j in range(steps)]
        h0_single = self.state_init.apply(context)
        h0 = [h0_single] * (self.num_layers * 2)
        states, _ = run_rnn(self.word_rnn, embedded, h0=h0, masks=step_masks)
        per_step = [sigmoid(self.output_proj.apply(s)) for s in states]
        probs = clip(concat(per_step, axis=-1), PROB_EPS, 1.0 - PROB_EPS)
        if mask is None:
            mask = np.ones((batch, steps))
        lengths = mask.sum(axis=1).astype(np.int64)
        return WordScoreSequence(probs, mask, lengths)


def sequence_score(words):
    """Geometric mean of per-token probabilities, one score per sequence.

    Computed as exp of the mean log probability over real tokens; a
    single-token sequence returns its probability unchanged.
    """
    p = words.probs.data
    logs = np.where(words.mask > 0, np.log(p), 0.0)
    lengths = np.maximum(words.lengths, 1)
    scores = np.exp(logs.sum(axis=1) / lengths)
    single = words.lengths == 1
    if single.any():
        first_real = np.argmax(words.mask > 0, axis=1)
        exact = np.take_along_axis(p, first_real[:, None], axis=1)[:, 0]
        scores = np.where(single, exact, scores)
    return scores


def accuracy(real_seqs, fake_seqs):
    """Token-pooled classification accuracy at threshold 0.5.

    Real tokens count as correct when p > 0.5, fake tokens when p < 0.5;
    exactly 0.5 counts as incorrect either way.
    """
    correct = 0.0
    total = 0.0
    for ws in real_seqs:
        m = ws.mask > 0
        correct += float(((ws.probs.data > 0.5) & m).sum())
        total += float(m.sum())
    for ws in fake_seqs:
        m = ws.mask > 0
        correct += float(((ws.probs.data < 0.5) & m).sum())
        total += float(m.sum())
    if total == 0:
        raise ValueError("accuracy: no tokens to classify")
    return correct / total

"""Response generation by noise exploration and discriminator ranking.

The generator decodes L candidates under independent noise draws whose
variance is scaled by an exploration factor; the discriminator scores each
candidate against the dialogue context and the list is returned sorted,
best first. A linear search over the exploration factor picks the value
that maximizes a validation metric.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import RandomStream
from .corpus import EOS_ID, tokenize
from .discriminator import sequence_score
from .generator import NoiseSpec

__all__ = [
    "InferenceConfig",
    "RankedCandidate",
    "generate_candidates",
    "rank_and_select",
    "order_candidates",
    "respond",
    "respond_to_context",
    "commit_utterance",
    "advance_with_text",
    "calibrate_alpha",
]


@dataclass(frozen=True)
class InferenceConfig:
    """Exploration and ranking knobs for response generation."""

    num_candidates: int = 8
    alpha: float = 7.0
    max_len: int = 24
    noise_level: str = "word"
    ranking: str = "discriminator"

    def __post_init__(self):
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        if self.alpha < 1.0:
            raise ValueError("alpha must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.noise_level not in ("utterance", "word", "none"):
            raise ValueError(f"unknown noise level: {self.noise_level!r}")
        if self.ranking not in ("discriminator", "combined"):
            raise ValueError(f"unknown ranking mode: {self.ranking!r}")

    def noise_spec(self, model):
        return NoiseSpec(self.noise_level, model.dims.noise_dim, float(self.alpha))


@dataclass
class RankedCandidate:
    """One candidate response in ranked order (rank 0 is best)."""

    token_ids: list
    d_score: float
    log_prob: float
    rank: int


def generate_candidates(model, state, config, rng):
    """Greedy-decode num_candidates responses under fresh noise draws.

    Returns (tokens, total_log_prob, steps) triples; duplicates are kept.
    """
    spec = config.noise_spec(model)
    return [model.generator.greedy_decode(state, spec, rng, config.max_len)
            for _ in range(config.num_candidates)]


def order_candidates(entries, mode):
    """Sort (tokens, norm_log_prob, d_score) triples into RankedCandidates.

    Discriminator mode orders by d_score; combined mode by the sum of the
    length-normalized log-probability and log d_score. Ties prefer the
    longer candidate, then the lexicographically smaller token sequence.
    """
    def key(entry):
        tokens, norm_lp, d_score = entry
        if mode == "combined":
            score = norm_lp + (np.log(d_score) if d_score > 0 else -np.inf)
        else:
            score = d_score
        return (-score, -len(tokens), tuple(tokens))

    ranked = []
    for rank, (tokens, norm_lp, d_score) in enumerate(sorted(entries, key=key)):
        ranked.append(RankedCandidate(list(tokens), float(d_score), float(norm_lp), rank))
    return ranked


def rank_and_select(model, state, decoded, config):
    """Score decoded candidates against the context and sort them.

    decoded: (tokens, total_log_prob, steps) triples from the generator.
    Empty candidates receive a discriminator score of 0 and sort last.
    """
    if not decoded:
        raise ValueError("rank_and_select: no candidates")
    entries = []
    for tokens, total_lp, steps in decoded:
        norm_lp = total_lp / max(steps, 1)
        if tokens:
            scored = np.array([tokens + [EOS_ID]])
            ws = model.discriminator.word_probs(state.context_top, scored)
            d_score = float(sequence_score(ws)[0])
        else:
            d_score = 0.0
        entries.append((tokens, norm_lp, d_score))
    return order_candidates(entries, config.ranking)


def commit_utterance(model, state, token_ids):
    """Fold a finished utterance (EOS appended here) into the context."""
    ids = np.array([list(token_ids) + [EOS_ID]], dtype=np.int64)
    enc = model.generator.encode_utterance(ids)
    return model.generator.update_context(state, enc)


def advance_with_text(model, state, text):
    """Tokenize, encode against the vocabulary, and commit one utterance."""
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("cannot commit an empty utterance")
    return model.generator.update_context(
        state,
        model.generator.encode_utterance(
            np.array([model.vocab.encode(tokens) + [EOS_ID]], dtype=np.int64)))


def respond(model, state, config, rng, choose_rank=0):
    """Generate, rank, and commit one model turn.

    Returns (ranked candidates, state after committing choose_rank).
    """
    decoded = generate_candidates(model, state, config, rng)
    ranked = rank_and_select(model, state, decoded, config)
    if not (0 <= choose_rank < len(ranked)):
        raise ValueError(f"choose_rank {choose_rank} out of range for {len(ranked)} candidates")
    new_state = commit_utterance(model, state, ranked[choose_rank].token_ids)
    return ranked, new_state


def respond_to_context(model, context_turns, config, rng):
    """Rank responses to a fresh dialogue context of token lists."""
    state = model.generator.initial_state(1)
    for turn in context_turns:
        state = commit_utterance(model, state, model.vocab.encode(turn)
                                 if turn and isinstance(turn[0], str) else turn)
    decoded = generate_candidates(model, state, config, rng)
    return rank_and_select(model, state, decoded, config)


def calibrate_alpha(model, dialogues, config, alpha_grid=None, seed=0):
    """Linear search for the exploration factor maximizing ROUGE-2 f1.

    Evaluates rank-0 responses against each dialogue's final turn at every
    grid value; ties go to the smaller alpha. Returns (best_alpha, scores).
    """
    from .metrics import rouge2_f1

    if alpha_grid is None:
        alpha_grid = list(range(1, 21))
    alpha_grid = list(alpha_grid)
    if not alpha_grid:
        raise ValueError("alpha grid must be nonempty")
    if not dialogues:
        raise ValueError("validation set must be nonempty")
    scores = {}
    for alpha in alpha_grid:
        cfg = replace(config, alpha=float(alpha))
        hyps, refs = [], []
        root = RandomStream(seed)
        for idx, d in enumerate(dialogues):
            rng = root.derive("calibrate", alpha, idx)
            ranked = respond_to_context(model, d.utterances[:-1], cfg, rng)
            hyps.append(model.vocab.decode(ranked[0].token_ids))
            refs.append(d.utterances[-1])
        scores[alpha] = rouge2_f1(hyps, refs)
    best = max(alpha_grid, key=lambda a: (scores[a], -a))
    return best, scores

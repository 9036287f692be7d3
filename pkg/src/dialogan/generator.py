"""Noise-conditioned hierarchical recurrent generator with attention.

Four recurrent stacks cooperate per turn: a bidirectional utterance encoder
summarizes each utterance into a fixed vector, a unidirectional context RNN
folds those summaries into the running dialogue state, a second
bidirectional encoder produces per-token attention memory over the latest
utterance, and a decoder emits the response conditioned on the previous
token's embedding, an attention readout, a Gaussian noise vector, and the
context state, all concatenated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import ShapeError, Tensor, concat, log_softmax, softmax
from .corpus import EOS_ID
from .layers import (
    AttentionParams,
    EmbeddingParams,
    LinearParams,
    StackedRnnParams,
    attend,
    gru_step,
    run_rnn,
)

__all__ = [
    "NoiseSpec",
    "DialogueState",
    "UtteranceEncoding",
    "TurnDistribution",
    "Generator",
    "sample_noise",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Where noise enters and how wide it is.

    level: "utterance" draws once per turn and repeats it every step;
    "word" draws fresh per step; "none" injects zeros.
    variance_multiplier scales the isotropic covariance (alpha * I); it is
    1 during training and >= 1 when exploring at inference.
    """

    level: str = "word"
    dim: int = 32
    variance_multiplier: float = 1.0

    def __post_init__(self):
        if self.level not in ("utterance", "word", "none"):
            raise ValueError(f"unknown noise level: {self.level!r}")
        if self.variance_multiplier < 1.0:
            raise ValueError("variance_multiplier must be >= 1")

    def scaled(self, alpha):
        return replace(self, variance_multiplier=float(alpha))


def sample_noise(spec, steps, rng, batch_size=1):
    """Draw the decoder noise sequence for one turn as [batch, dim] tensors."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    std = float(np.sqrt(spec.variance_multiplier))
    if spec.level == "none":
        zero = Tensor(np.zeros((batch_size, spec.dim)))
        return [zero] * steps
    if spec.level == "utterance":
        z = Tensor(rng.normal(size=(batch_size, spec.dim), std=std))
        return [z] * steps
    return [Tensor(rng.normal(size=(batch_size, spec.dim), std=std)) for _ in range(steps)]


@dataclass
class UtteranceEncoding:
    """Both encoder views of one utterance.

    summary: fixed-length utterance-encoder terminal state [batch, 2H].
    memory: per-token attention-encoder states, each [batch, 2H]; None when
    attention is disabled.
    memory_final: attention-encoder terminal state [batch, 2H] or None.
    memory_mask: [batch, tokens] array marking real (non-PAD) positions.
    """

    summary: Tensor
    memory: list | None
    memory_final: Tensor | None
    memory_mask: np.ndarray | None


@dataclass
class DialogueState:
    """Running dialogue context plus the latest utterance's attention memory."""

    context_layers: list
    memory: list | None
    memory_final: Tensor | None
    memory_mask: np.ndarray | None
    batch_size: int

    @property
    def context_top(self):
        return self.context_layers[-1]


@dataclass
class TurnDistribution:
    """Per-step next-token log-probability rows for one response turn."""

    log_probs: list

    @property
    def step_count(self):
        return len(self.log_probs)

    def token_log_probs(self, targets):
        """[batch] log-prob Tensors of the target token at each step."""
        from .autodiff import take_along_last
        targets = np.asarray(targets)
        return [take_along_last(row, targets[:, j]) for j, row in enumerate(self.log_probs)]

    def total_log_prob(self, targets, mask=None):
        """Scalar sum of target-token log-probs over unmasked positions."""
        mask = None if mask is None else np.asarray(mask)
        total = None
        for j, step_lp in enumerate(self.token_log_probs(targets)):
            if mask is not None:
                step_lp = step_lp * Tensor(mask[:, j])
            term = step_lp.sum()
            total = term if total is None else total + term
        return total


class Generator:
    """Attention-augmented hierarchical encoder-decoder with noise input."""

    def __init__(self, vocab_size, embed_dim, hidden_dim, num_layers, noise_dim, rng,
                 use_attention=True):
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.noise_dim = noise_dim
        self.use_attention = use_attention

        self.embedding = EmbeddingParams("embedding", vocab_size, embed_dim, rng)
        self.utterance_encoder = StackedRnnParams(
            "utterance_encoder", embed_dim, hidden_dim, num_layers, rng, bidirectional=True)
        if use_attention:
            self.attention_encoder = StackedRnnParams(
                "attention_encoder", embed_dim, hidden_dim, num_layers, rng, bidirectional=True)
            self.attention = AttentionParams(
                "attention", hidden_dim, 2 * hidden_dim, hidden_dim, rng)
            init_in = hidden_dim + 2 * hidden_dim
            dec_in = embed_dim + 2 * hidden_dim + noise_dim + hidden_dim
        else:
            self.attention_encoder = None
            self.attention = None
            init_in = hidden_dim
            dec_in = embed_dim + noise_dim + hidden_dim
        self.context_rnn = StackedRnnParams(
            "context_rnn", 2 * hidden_dim, hidden_dim, num_layers, rng)
        self.decoder_init = LinearParams("decoder_init", init_in, num_layers * hidden_dim, rng)
        self.decoder = StackedRnnParams("decoder", dec_in, hidden_dim, num_layers, rng)
        self.output_proj = LinearParams("output_proj", hidden_dim, vocab_size, rng)

    def parameters(self):
        groups = [self.embedding, self.utterance_encoder]
        if self.use_attention:
            groups.extend([self.attention_encoder, self.attention])
        groups.extend([self.context_rnn, self.decoder_init, self.decoder, self.output_proj])
        out = []
        for g in groups:
            out.extend(g.params())
        return out

    # -- encoding and context ------------------------------------------
    def initial_state(self, batch_size=1):
        zero = Tensor(np.zeros((batch_size, self.hidden_dim)))
        return DialogueState([zero] * self.num_layers, None, None, None, batch_size)

    def encode_utterance(self, token_ids, mask=None):
        """Encode one utterance: fixed summary plus per-token memory."""
        token_ids = np.atleast_2d(np.asarray(token_ids))
        if token_ids.shape[1] == 0:
            raise ShapeError("encode_utterance: utterance must be nonempty")
        steps = token_ids.shape[1]
        embedded = [self.embedding.lookup(token_ids[:, j]) for j in range(steps)]
        step_masks = None
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)
            step_masks = [Tensor(mask[:, j : j + 1]) for j in range(steps)]
        _, summary = run_rnn(self.utterance_encoder, embedded, masks=step_masks)
        if not self.use_attention:
            return UtteranceEncoding(summary, None, None, None)
        memory, memory_final = run_rnn(self.attention_encoder, embedded, masks=step_masks)
        return UtteranceEncoding(summary, memory, memory_final, mask)

    def update_context(self, state, encoding):
        """Fold one encoded utterance into the context; swap in its memory."""
        x = encoding.summary
        new_layers = []
        for k, (cell,) in enumerate(self.context_rnn.layers):
            h = gru_step(cell, x, state.context_layers[k])
            new_layers.append(h)
            x = h
        return DialogueState(new_layers, encoding.memory, encoding.memory_final,
                             encoding.memory_mask, state.batch_size)

    # -- decoding --------------------------------------------------------
    def init_decoder_state(self, state):
        """Project combined context and attention-encoder finals per layer."""
        if self.use_attention:
            if state.memory_final is None:
                raise ShapeError("decoder needs attention memory; update_context first")
            combined = concat([state.context_top, state.memory_final], axis=-1)
        else:
            combined = state.context_top
        flat = self.decoder_init.apply(combined)
        return [flat[:, k * self.hidden_dim : (k + 1) * self.hidden_dim]
                for k in range(self.num_layers)]

    def decoder_step(self, prev_tokens, h_layers, state, z):
        """One decoder step: returns ([batch, V] logits, new layer states)."""
        prev_tokens = np.asarray(prev_tokens).reshape(-1)
        emb = self.embedding.lookup(prev_tokens)
        parts = [emb]
        if self.use_attention:
            if state.memory is None:
                raise ShapeError("decoder_step: state has no attention memory")
            context, _ = attend(self.attention, h_layers[-1], state.memory,
                                memory_mask=state.memory_mask)
            parts.append(context)
        parts.extend([z, state.context_top])
        x = concat(parts, axis=-1)
        new_layers = []
        for k, (cell,) in enumerate(self.decoder.layers):
            h = gru_step(cell, x, h_layers[k])
            new_layers.append(h)
            x = h
        return self.output_proj.apply(x), new_layers

    def teacher_forced_pass(self, state, targets, mask=None, noise=None, sample_rng=None):
        """Teacher-forced decode of one response turn.

        targets: [batch, T] ground-truth ids (EOS included). noise: list of
        T noise tensors. Returns (TurnDistribution, samples) where samples
        is a [batch, T] id matrix drawn from each step's distribution when
        sample_rng is given, else None. Samples at masked positions are PAD.
        """
        targets = np.atleast_2d(np.asarray(targets))
        batch, steps = targets.shape
        if noise is None:
            noise = sample_noise(NoiseSpec("none", self.noise_dim), steps, None, batch)
        if len(noise) != steps:
            raise ShapeError(f"teacher_forced_pass: {len(noise)} noise draws for {steps} steps")
        h = self.init_decoder_state(state)
        prev = np.full(batch, EOS_ID, dtype=np.int64)
        rows = []
        samples = np.zeros((batch, steps), dtype=np.int64) if sample_rng is not None else None
        for j in range(steps):
            logits, h = self.decoder_step(prev, h, state, noise[j])
            rows.append(log_softmax(logits, axis=-1))
            if sample_rng is not None:
                probs = softmax(logits, axis=-1).data
                drawn = sample_rng.categorical(probs)
                if mask is not None:
                    drawn = drawn * np.asarray(mask)[:, j].astype(np.int64)
                samples[:, j] = drawn
            prev = targets[:, j]
        return TurnDistribution(rows), samples

    def teacher_forced_turn(self, state, targets, mask=None, noise=None):
        dist, _ = self.teacher_forced_pass(state, targets, mask=mask, noise=noise)
        return dist

    def sample_fake_turn(self, state, targets, rng, mask=None, noise=None):
        """Draw a same-length fake response from the teacher-forced steps."""
        _, samples = self.teacher_forced_pass(
            state, targets, mask=mask, noise=noise, sample_rng=rng)
        return samples

    def greedy_decode(self, state, noise_spec, rng, max_len):
        """Argmax decode until EOS or max_len (single dialogue).

        Returns (tokens, total_log_prob, steps): tokens exclude the final
        EOS; total_log_prob sums every emitted step including that EOS.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        noise = sample_noise(noise_spec, max_len, rng, batch_size=1)
        h = self.init_decoder_state(state)
        prev = np.array([EOS_ID], dtype=np.int64)
        tokens = []
        total_logp = 0.0
        steps = 0
        for j in range(max_len):
            logits, h = self.decoder_step(prev, h, state, noise[j])
            logp = log_softmax(logits, axis=-1).data[0]
            tok = int(np.argmax(logp))
            total_logp += float(logp[tok])
            steps += 1
            if tok == EOS_ID:
                break
            tokens.append(tok)
            prev = np.array([tok], dtype=np.int64)
        return tokens, total_logp, steps

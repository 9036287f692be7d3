"""Recurrent building blocks: GRU cells, stacked runners, additive attention.

Everything is batch-first: step inputs are [batch, features] tensors and a
sequence is a list of such tensors. Masks use the hold-state trick so padded
positions carry the previous hidden state forward unchanged.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, ShapeError, Tensor, concat, sigmoid, softmax, tanh, xavier_init

__all__ = [
    "GruLayerParams",
    "StackedRnnParams",
    "AttentionParams",
    "LinearParams",
    "EmbeddingParams",
    "gru_step",
    "run_rnn",
    "attend",
]


class LinearParams:
    """Affine map y = x W + b."""

    def __init__(self, name, in_dim, out_dim, rng):
        self.weight = Parameter(f"{name}.weight", xavier_init(in_dim, out_dim, rng))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_dim))

    def apply(self, x):
        return x @ self.weight.value + self.bias.value

    def params(self):
        return [self.weight, self.bias]


class EmbeddingParams:
    """Token-id to vector lookup table."""

    def __init__(self, name, vocab_size, dim, rng):
        self.table = Parameter(f"{name}.table", xavier_init(vocab_size, dim, rng))

    def lookup(self, ids):
        from .autodiff import gather_rows
        return gather_rows(self.table.value, ids)

    def params(self):
        return [self.table]


class GruLayerParams:
    """One GRU cell: update gate z, reset gate r, candidate state."""

    def __init__(self, name, input_dim, hidden_dim, rng):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self._named = []
        for gate in ("update", "reset", "candidate"):
            w = Parameter(f"{name}.{gate}.w_in", xavier_init(input_dim, hidden_dim, rng))
            u = Parameter(f"{name}.{gate}.w_rec", xavier_init(hidden_dim, hidden_dim, rng))
            b = Parameter(f"{name}.{gate}.bias", np.zeros(hidden_dim))
            setattr(self, gate, (w, u, b))
            self._named.extend((w, u, b))

    def params(self):
        return list(self._named)


def gru_step(params, x, h_prev):
    """Advance one GRU cell: h' = z·h_prev + (1−z)·h̃."""
    if x.shape[-1] != params.input_dim or h_prev.shape[-1] != params.hidden_dim:
        raise ShapeError(
            f"gru_step: input {x.shape} / state {h_prev.shape} do not match "
            f"dims ({params.input_dim}, {params.hidden_dim})")
    wz, uz, bz = params.update
    wr, ur, br = params.reset
    wc, uc, bc = params.candidate
    z = sigmoid(x @ wz.value + h_prev @ uz.value + bz.value)
    r = sigmoid(x @ wr.value + h_prev @ ur.value + br.value)
    cand = tanh(x @ wc.value + (r * h_prev) @ uc.value + bc.value)
    return z * h_prev + (Tensor(1.0) - z) * cand


class StackedRnnParams:
    """Depth-stacked GRU layers, unidirectional or bidirectional.

    Bidirectional stacks hold a forward and a backward cell per depth; each
    deeper layer consumes the per-step concatenation of the previous layer's
    two directions.
    """

    def __init__(self, name, input_dim, hidden_dim, num_layers, rng, bidirectional=False):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.bidirectional = bidirectional
        self.layers = []
        step_out = hidden_dim * (2 if bidirectional else 1)
        for k in range(num_layers):
            in_dim = input_dim if k == 0 else step_out
            fw = GruLayerParams(f"{name}.layer{k}.fw", in_dim, hidden_dim, rng)
            if bidirectional:
                bw = GruLayerParams(f"{name}.layer{k}.bw", in_dim, hidden_dim, rng)
                self.layers.append((fw, bw))
            else:
                self.layers.append((fw,))

    @property
    def output_dim(self):
        return self.hidden_dim * (2 if self.bidirectional else 1)

    def params(self):
        out = []
        for cells in self.layers:
            for cell in cells:
                out.extend(cell.params())
        return out


def _masked_step(cell, x, h_prev, mask):
    h_new = gru_step(cell, x, h_prev)
    if mask is None:
        return h_new
    return mask * h_new + (Tensor(1.0) - mask) * h_prev


def _run_direction(cell, sequence, h0, masks, reverse):
    order = range(len(sequence) - 1, -1, -1) if reverse else range(len(sequence))
    h = h0
    states = [None] * len(sequence)
    for t in order:
        h = _masked_step(cell, sequence[t], h, None if masks is None else masks[t])
        states[t] = h
    return states, h


def run_rnn(params, sequence, h0=None, masks=None):
    """Run a stacked RNN over a step-major sequence.

    sequence: list of [batch, features] tensors, one per step.
    h0: optional list of initial states, one per (layer, direction) in the
        order layer0-fw, layer0-bw, layer1-fw, ... Defaults to zeros.
    masks: optional list of [batch, 1] tensors; zero entries hold state.

    Returns (states, final): per-step top-layer states (per-step directions
    concatenated when bidirectional) and the terminal state (terminal states
    of both directions concatenated when bidirectional).
    """
    if not sequence:
        raise ShapeError("run_rnn: sequence must be nonempty")
    batch = sequence[0].shape[0]
    cells_per_layer = 2 if params.bidirectional else 1
    if h0 is None:
        zero = Tensor(np.zeros((batch, params.hidden_dim)))
        h0 = [zero] * (params.num_layers * cells_per_layer)
    if len(h0) != params.num_layers * cells_per_layer:
        raise ShapeError(
            f"run_rnn: expected {params.num_layers * cells_per_layer} initial states, got {len(h0)}")

    inputs = sequence
    fw_final = bw_final = None
    for k, cells in enumerate(params.layers):
        fw_states, fw_final = _run_direction(
            cells[0], inputs, h0[k * cells_per_layer], masks, reverse=False)
        if params.bidirectional:
            bw_states, bw_final = _run_direction(
                cells[1], inputs, h0[k * cells_per_layer + 1], masks, reverse=True)
            inputs = [concat([f, b], axis=-1) for f, b in zip(fw_states, bw_states)]
        else:
            inputs = fw_states
    final = concat([fw_final, bw_final], axis=-1) if params.bidirectional else fw_final
    return inputs, final


class AttentionParams:
    """Additive scorer: v · tanh(Wq q + Wm m) over memory positions."""

    def __init__(self, name, query_dim, memory_dim, align_dim, rng):
        self.query_proj = Parameter(f"{name}.query_proj", xavier_init(query_dim, align_dim, rng))
        self.memory_proj = Parameter(f"{name}.memory_proj", xavier_init(memory_dim, align_dim, rng))
        self.score_vec = Parameter(f"{name}.score_vec", xavier_init(align_dim, 1, rng))

    def params(self):
        return [self.query_proj, self.memory_proj, self.score_vec]


def attend(params, query, memory, memory_mask=None):
    """Softmax-weighted sum of memory under additive alignment scores.

    query: [batch, query_dim]; memory: list of [batch, memory_dim] tensors.
    memory_mask: optional [batch, len(memory)] array, zero at padded slots.
    Returns (context [batch, memory_dim], weights [batch, len(memory)]).
    """
    if not memory:
        raise ShapeError("attend: memory must be nonempty")
    q = query @ params.query_proj.value
    scores = []
    for m in memory:
        s = tanh(q + m @ params.memory_proj.value) @ params.score_vec.value
        scores.append(s)
    logits = concat(scores, axis=-1)
    if memory_mask is not None:
        logits = logits + Tensor((1.0 - np.asarray(memory_mask)) * -1e9)
    weights = softmax(logits, axis=-1)
    context = None
    for j, m in enumerate(memory):
        term = weights[:, j : j + 1] * m
        context = term if context is None else context + term
    return context, weights

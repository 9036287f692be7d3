"""Shared test utilities: oracles (finite differences, metrics), tiny models."""

import numpy as np

from dialogan.autodiff import backward
from dialogan.corpus import Dialogue, Vocab, make_batches
from dialogan.model import DialogueModel, ModelDims


def make_tiny_model(seed=0, tokens=("a", "b", "c", "d", "e", "f"), **dim_overrides):
    dims = dict(embed_dim=4, hidden_dim=4, num_layers=1, noise_dim=4, use_attention=True)
    dims.update(dim_overrides)
    return DialogueModel(ModelDims(**dims), Vocab(list(tokens)), seed=seed)


def make_batch(model, texts_per_dialogue, batch_size=8):
    ds = [Dialogue.from_texts(texts) for texts in texts_per_dialogue]
    batches = make_batches(ds, batch_size, model.vocab)
    assert len(batches) == 1
    return batches[0]


def finite_difference_check(make_loss, params, rng, step=1e-5, rel_tol=1e-6,
                            samples_per_param=6):
    """Compare backward-pass gradients against central finite differences.

    make_loss is called with `params` and must rebuild the scalar loss from
    their current values each time. A random subset of coordinates per
    parameter is probed; relative error uses max(1, |analytic|, |numeric|)
    as the denominator.
    """
    for p in params:
        p.zero_grad()
    loss = make_loss(params)
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    for p, grad in zip(params, analytic):
        flat = p.value.data.reshape(-1)
        n = flat.size
        picks = range(n) if n <= samples_per_param else rng.choice(n, size=samples_per_param, replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + step
            up = float(make_loss(params).data)
            flat[i] = orig - step
            down = float(make_loss(params).data)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            a = grad.reshape(-1)[i]
            denom = max(1.0, abs(a), abs(numeric))
            assert abs(a - numeric) / denom < rel_tol, (
                f"param {p.name} coord {i}: analytic {a!r} vs numeric {numeric!r}")


# -- naive metric oracles, written against the definitions -----------------

def count_ngrams(tokens, n):
    out = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i : i + n])
        out[g] = out.get(g, 0) + 1
    return out


def bleu2_oracle(cands, refs):
    eps = 1e-9
    match1 = match2 = tot1 = tot2 = 0
    c_len = r_len = 0
    for cand, ref in zip(cands, refs):
        c_len += len(cand)
        r_len += len(ref)
        for n in (1, 2):
            cg = count_ngrams(cand, n)
            rg = count_ngrams(ref, n)
            m = sum(min(c, rg.get(g, 0)) for g, c in cg.items())
            if n == 1:
                match1, tot1 = match1 + m, tot1 + sum(cg.values())
            else:
                match2, tot2 = match2 + m, tot2 + sum(cg.values())
    if c_len == 0:
        return 0.0
    p1 = (match1 + eps) / (tot1 + eps)
    p2 = (match2 + eps) / (tot2 + eps)
    bp = 1.0 if c_len > r_len else float(np.exp(1 - r_len / c_len))
    return bp * float(np.exp(0.5 * np.log(p1) + 0.5 * np.log(p2)))


def rouge2_oracle(cands, refs):
    vals = []
    for cand, ref in zip(cands, refs):
        cg = count_ngrams(cand, 2)
        rg = count_ngrams(ref, 2)
        nc, nr = sum(cg.values()), sum(rg.values())
        if nc == 0 or nr == 0:
            vals.append(0.0)
            continue
        ov = sum(min(c, rg.get(g, 0)) for g, c in cg.items())
        p, r = ov / nc, ov / nr
        vals.append(0.0 if p + r == 0 else 2 * p * r / (p + r))
    return sum(vals) / len(vals)


def distinct_oracle(responses, n):
    grams = []
    for resp in responses:
        grams.extend(tuple(resp[i : i + n]) for i in range(len(resp) - n + 1))
    return len(set(grams)) / len(grams) if grams else 0.0


def nasl_oracle(gen, gt):
    return (sum(len(g) for g in gen) / len(gen)) / (sum(len(r) for r in gt) / len(gt))


def perplexity_oracle(model, dialogues):
    """Per-dialogue log-prob accumulation through the graph-building path."""
    total = 0.0
    count = 0
    g = model.generator
    for d in dialogues:
        state = g.initial_state(1)
        for i in range(len(d.utterances) - 1):
            ids = np.array([model.vocab.encode(d.utterances[i]) + [2]])
            state = g.update_context(state, g.encode_utterance(ids))
            targets = np.array([model.vocab.encode(d.utterances[i + 1]) + [2]])
            dist = g.teacher_forced_turn(state, targets)
            total -= dist.total_log_prob(targets).item()
            count += targets.shape[1]
    return float(np.exp(total / count))


def random_micro_corpus(rng, max_items=5, max_tokens=8, words="abcdefg"):
    words = list(words)
    k = int(rng.integers(1, max_items + 1))

    def sent():
        return [words[int(rng.integers(0, len(words)))]
                for _ in range(int(rng.integers(1, max_tokens + 1)))]

    return [sent() for _ in range(k)], [sent() for _ in range(k)]

"""Automatic evaluation battery for generated dialogue responses.

Corpus BLEU-2 with brevity penalty, macro-averaged ROUGE-2 f1, pooled
distinct-1/2, length ratio against the ground truth, and teacher-forcing
perplexity. Texts are plain token lists without EOS; perplexity is the one
metric that scores EOS, since the model must predict termination.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import make_batches

__all__ = ["EvalReport", "bleu2", "rouge2_f1", "distinct_n", "nasl",
           "perplexity", "evaluate", "MetricError"]

_EPS = 1e-9


class MetricError(ValueError):
    """Metric preconditions violated (empty corpus, misaligned lists)."""


def _ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _check_aligned(candidates, references):
    if not candidates:
        raise MetricError("empty corpus")
    if len(candidates) != len(references):
        raise MetricError(
            f"misaligned corpora: {len(candidates)} candidates, {len(references)} references")


def bleu2(candidates, references):
    """Corpus BLEU over 1- and 2-gram modified precisions with brevity penalty.

    Precisions are smoothed additively by 1e-9 so zero-overlap corpora
    score near zero instead of failing on log(0).
    """
    _check_aligned(candidates, references)
    matched = {1: 0, 2: 0}
    total = {1: 0, 2: 0}
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in (1, 2):
            c_counts = Counter(_ngrams(cand, n))
            r_counts = Counter(_ngrams(ref, n))
            matched[n] += sum(min(count, r_counts[g]) for g, count in c_counts.items())
            total[n] += max(len(cand) - n + 1, 0)
    if cand_len == 0:
        return 0.0
    log_p = sum(0.5 * np.log((matched[n] + _EPS) / (total[n] + _EPS)) for n in (1, 2))
    brevity = 1.0 if cand_len > ref_len else np.exp(1.0 - ref_len / cand_len)
    return float(brevity * np.exp(log_p))


def rouge2_f1(candidates, references):
    """Macro-averaged bigram f1 with clipped overlap counts.

    Pairs where either side is shorter than two tokens contribute 0.
    """
    _check_aligned(candidates, references)
    scores = []
    for cand, ref in zip(candidates, references):
        c_counts = Counter(_ngrams(cand, 2))
        r_counts = Counter(_ngrams(ref, 2))
        c_total = sum(c_counts.values())
        r_total = sum(r_counts.values())
        if c_total == 0 or r_total == 0:
            scores.append(0.0)
            continue
        overlap = sum(min(count, r_counts[g]) for g, count in c_counts.items())
        precision = overlap / c_total
        recall = overlap / r_total
        if precision + recall == 0:
            scores.append(0.0)
        else:
            scores.append(2 * precision * recall / (precision + recall))
    return float(np.mean(scores))


def distinct_n(responses, n):
    """Unique n-grams across all responses over total n-gram occurrences."""
    if n not in (1, 2):
        raise MetricError(f"distinct_n supports n in {{1, 2}}, got {n}")
    seen = set()
    total = 0
    for resp in responses:
        grams = _ngrams(resp, n)
        seen.update(grams)
        total += len(grams)
    return len(seen) / total if total else 0.0


def nasl(generated, ground_truth):
    """Mean generated length over mean ground-truth length."""
    _check_aligned(generated, ground_truth)
    gt_mean = np.mean([len(r) for r in ground_truth])
    if gt_mean == 0:
        raise MetricError("ground-truth responses have zero mean length")
    return float(np.mean([len(g) for g in generated]) / gt_mean)


def perplexity(model, dialogues, batch_size=32):
    """Teacher-forcing perplexity over every response turn.

    exp of total negative log-likelihood divided by the total number of
    scored tokens (EOS included). Noise inputs are zero so the measure is
    deterministic.
    """
    if not dialogues:
        raise MetricError("empty corpus")
    g = model.generator
    total_nll = 0.0
    total_tokens = 0.0
    for batch in make_batches(dialogues, batch_size, model.vocab):
        state = g.initial_state(batch.size)
        for i in range(batch.num_turns - 1):
            enc = g.encode_utterance(batch.turns[i], batch.masks[i])
            state = g.update_context(state, enc)
            targets, mask = batch.turns[i + 1], batch.masks[i + 1]
            dist = g.teacher_forced_turn(state, targets, mask)
            for j, row in enumerate(dist.log_probs):
                picked = np.take_along_axis(row.data, targets[:, j : j + 1], axis=1)[:, 0]
                total_nll -= float((picked * mask[:, j]).sum())
            total_tokens += float(mask.sum())
    return float(np.exp(total_nll / total_tokens))


@dataclass
class EvalReport:
    """Table of generator quality measures plus the sample count."""

    perplexity: float
    bleu_2: float
    rouge_2_f1: float
    distinct_1: float
    distinct_2: float
    nasl: float
    sample_count: int

    _METRICS = ("perplexity", "bleu_2", "rouge_2_f1", "distinct_1", "distinct_2", "nasl")

    def rows(self):
        return [(name, getattr(self, name)) for name in self._METRICS]

    def to_csv(self):
        lines = ["metric,value"]
        lines += [f"{name},{value:.6f}" for name, value in self.rows()]
        return "\n".join(lines) + "\n"

    def to_table(self):
        names = [n.replace("_", "-") for n in self._METRICS]
        values = [f"{v:.4f}" for _, v in self.rows()]
        widths = [max(len(n), len(v)) for n, v in zip(names, values)]
        head = "  ".join(n.rjust(w) for n, w in zip(names, widths))
        body = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        return head + "\n" + body + "\n"


def evaluate(model, dialogues, inference_config, seed=0):
    """Score a test corpus: teacher-forced perplexity plus reranked decodes.

    For each dialogue the final turn is the reference; the model reads all
    earlier turns and its best-ranked candidate is the hypothesis.
    """
    from .autodiff import RandomStream
    from .inference import respond_to_context

    if not dialogues:
        raise MetricError("empty corpus")
    ppl = perplexity(model, dialogues)
    root = RandomStream(seed)
    hypotheses = []
    references = []
    for idx, d in enumerate(dialogues):
        candidates = respond_to_context(
            model, d.utterances[:-1], inference_config, root.derive("eval", idx))
        hypotheses.append(model.vocab.decode(candidates[0].token_ids))
        references.append(d.utterances[-1])
    return EvalReport(
        perplexity=ppl,
        bleu_2=bleu2(hypotheses, references),
        rouge_2_f1=rouge2_f1(hypotheses, references),
        distinct_1=distinct_n(hypotheses, 1),
        distinct_2=distinct_n(hypotheses, 2),
        nasl=nasl(hypotheses, references),
        sample_count=len(dialogues),
    )

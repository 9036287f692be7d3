"""Losses and the accuracy-gated adversarial training loop.

Each iteration runs one forward pass over a conversation batch, producing
the teacher-forcing cross-entropy, sampled fake responses, and both
adversarial losses from shared computations. The discriminator steps only
while its token accuracy sits below a cap, and the generator's adversarial
term switches on only once that accuracy clears a floor; below the floor
the generator trains on cross-entropy alone.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .autodiff import (
    OptimizerState,
    RandomStream,
    ShapeError,
    Tensor,
    backward,
    clip_and_step,
    log,
    maybe_decay_lr,
)
from .corpus import build_vocab, make_batches
from .discriminator import accuracy
from .generator import NoiseSpec, sample_noise
from .model import DialogueModel, ModelDims, save_checkpoint

__all__ = [
    "LossWeights",
    "GateThresholds",
    "TrainConfig",
    "TrainRecordRow",
    "ConfigError",
    "CSV_HEADER",
    "PRESETS",
    "update_gates",
    "mle_loss",
    "gan_losses",
    "run_batch",
    "train_iteration",
    "train",
    "records_to_csv",
    "parse_config",
    "load_config",
    "config_to_text",
]


class ConfigError(ValueError):
    """Malformed configuration text or unknown key/preset."""


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights for the generator objective."""

    adversarial: float = 1.0
    mle: float = 1.0

    def __post_init__(self):
        if self.adversarial < 0 or self.mle < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class GateThresholds:
    """Accuracy gates: pause D updates at the cap, enable the generator's
    adversarial term at the floor."""

    d_update_cap: float = 0.99
    adversarial_floor: float = 0.75

    def __post_init__(self):
        if not (0.0 < self.adversarial_floor <= self.d_update_cap <= 1.0):
            raise ValueError("need 0 < adversarial_floor <= d_update_cap <= 1")


def update_gates(d_acc, gates):
    """(update_discriminator, use_adversarial_term) for a given accuracy."""
    return d_acc < gates.d_update_cap, not (d_acc < gates.adversarial_floor)


def mle_loss(dist, targets, mask=None):
    """Mean negative log-likelihood of the targets over unmasked tokens."""
    targets = np.atleast_2d(np.asarray(targets))
    if dist.step_count != targets.shape[1]:
        raise ShapeError(
            f"mle_loss: {dist.step_count} distribution steps for {targets.shape[1]} targets")
    if mask is None:
        mask = np.ones_like(targets, dtype=np.float64)
    count = float(np.asarray(mask).sum())
    return dist.total_log_prob(targets, mask) * (-1.0 / count)


def gan_losses(real_seqs, fake_seqs):
    """Token-pooled discriminator and generator adversarial losses.

    d_loss = -mean log p(real) - mean log(1 - p(fake));
    g_adv = -mean log p(fake), the non-saturating generator form.
    """
    def pooled_mean_log(seqs, flip):
        total = None
        count = 0.0
        for ws in seqs:
            p = (Tensor(1.0) - ws.probs) if flip else ws.probs
            term = (log(p) * Tensor(ws.mask)).sum()
            total = term if total is None else total + term
            count += float(ws.mask.sum())
        return total * (1.0 / count)

    d_loss = -pooled_mean_log(real_seqs, flip=False) - pooled_mean_log(fake_seqs, flip=True)
    g_adv = -pooled_mean_log(fake_seqs, flip=False)
    return d_loss, g_adv


@dataclass
class BatchForward:
    """Everything one forward pass over a batch yields."""

    mle: Tensor
    d_loss: Tensor
    g_adv: Tensor
    d_acc: float


def run_batch(model, batch, noise_spec, rng):
    """One forward pass over every turn of a conversation batch.

    Ground-truth context drives the turn loop; each response turn is
    teacher-forced for the cross-entropy and simultaneously sampled for the
    fake sequences the discriminator scores.
    """
    g = model.generator
    state = g.initial_state(batch.size)
    nll_total = None
    token_count = 0.0
    real_seqs, fake_seqs = [], []
    for i in range(batch.num_turns - 1):
        enc = g.encode_utterance(batch.turns[i], batch.masks[i])
        state = g.update_context(state, enc)
        targets, mask = batch.turns[i + 1], batch.masks[i + 1]
        noise = sample_noise(noise_spec, targets.shape[1], rng, batch.size)
        dist, fakes = g.teacher_forced_pass(state, targets, mask, noise, sample_rng=rng)
        term = dist.total_log_prob(targets, mask)
        nll_total = term if nll_total is None else nll_total + term
        token_count += float(mask.sum())
        real_seqs.append(model.discriminator.word_probs(state.context_top, targets, mask))
        fake_seqs.append(model.discriminator.word_probs(state.context_top, fakes, mask))
    mle = nll_total * (-1.0 / token_count)
    d_loss, g_adv = gan_losses(real_seqs, fake_seqs)
    return BatchForward(mle, d_loss, g_adv, accuracy(real_seqs, fake_seqs))


@dataclass
class TrainRecordRow:
    """One iteration's telemetry."""

    iteration: int
    epoch: int
    d_acc: float
    mle_loss: float
    d_loss: float
    g_adv_loss: float
    combined_loss: float
    learning_rate: float
    updated_d: bool
    used_adv: bool


CSV_HEADER = ("iteration,epoch,d_acc,mle_loss,d_loss,g_adv_loss,"
              "combined_loss,learning_rate,updated_d,used_adv")


def records_to_csv(rows, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(CSV_HEADER + "\n")
        for r in rows:
            f.write(f"{r.iteration},{r.epoch},{r.d_acc:.6f},{r.mle_loss:.6f},"
                    f"{r.d_loss:.6f},{r.g_adv_loss:.6f},{r.combined_loss:.6f},"
                    f"{r.learning_rate:.8f},{int(r.updated_d)},{int(r.used_adv)}\n")


def train_iteration(model, batch, weights, gates, optimizer, noise_spec, rng,
                    d_acc_override=None, iteration=0, epoch=0):
    """One gated adversarial update; restores parameters if math blows up.

    d_acc_override substitutes an injected accuracy for the measured one so
    the gating logic can be exercised directly.
    """
    snapshot = [p.data.copy() for p in model.parameters()]
    try:
        model.zero_all_grads()
        fw = run_batch(model, batch, noise_spec, rng)
        d_acc = fw.d_acc if d_acc_override is None else float(d_acc_override)
        update_d, use_adv = update_gates(d_acc, gates)
        if update_d:
            backward(fw.d_loss)
            clip_and_step(model.discriminator_parameters(), optimizer)
        if use_adv:
            objective = fw.g_adv * weights.adversarial + fw.mle * weights.mle
        else:
            objective = fw.mle
        backward(objective)
        clip_and_step(model.generator_parameters(), optimizer)
        combined = weights.adversarial * fw.g_adv.item() + weights.mle * fw.mle.item()
        maybe_decay_lr(optimizer, combined)
    except (FloatingPointError, ValueError):
        for p, saved in zip(model.parameters(), snapshot):
            p.value.data = saved
            p.zero_grad()
        raise
    return TrainRecordRow(
        iteration=iteration, epoch=epoch, d_acc=d_acc,
        mle_loss=fw.mle.item(), d_loss=fw.d_loss.item(), g_adv_loss=fw.g_adv.item(),
        combined_loss=combined, learning_rate=optimizer.learning_rate,
        updated_d=update_d, used_adv=use_adv)


@dataclass(frozen=True)
class TrainConfig:
    """Full training recipe; defaults are the desk-scale preset."""

    embed_dim: int = 32
    hidden_dim: int = 32
    num_layers: int = 1
    noise_dim: int = 32
    use_attention: bool = True
    noise_level: str = "word"
    vocab_max: int = 512
    batch_size: int = 8
    learning_rate: float = 0.5
    decay_factor: float = 0.99
    clip_norm: float = 5.0
    adversarial_weight: float = 1.0
    mle_weight: float = 1.0
    d_update_accuracy_cap: float = 0.99
    adversarial_accuracy_floor: float = 0.75
    epochs: int = 300
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 10
    early_stop_perplexity: float | None = None

    def dims(self):
        return ModelDims(embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
                         num_layers=self.num_layers, noise_dim=self.noise_dim,
                         use_attention=self.use_attention)

    def weights(self):
        return LossWeights(self.adversarial_weight, self.mle_weight)

    def gates(self):
        return GateThresholds(self.d_update_accuracy_cap, self.adversarial_accuracy_floor)


PRESETS = {
    "desk": TrainConfig(),
    "paper": TrainConfig(
        embed_dim=512, hidden_dim=512, num_layers=3, noise_dim=512,
        vocab_max=50_000, batch_size=64, epochs=40),
}


def _coerce(field, raw):
    kind = field.type
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "float | None":
        return None if raw.lower() == "none" else float(raw)
    return raw


def parse_config(text):
    """Parse flat `key = value` lines, honoring an optional `preset` key."""
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected `key = value`, got {line!r}")
        key, _, value = line.partition("=")
        data[key.strip()] = value.strip()
    preset_name = data.pop("preset", "desk")
    if preset_name not in PRESETS:
        raise ConfigError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[preset_name]
    by_name = {f.name: f for f in fields(TrainConfig)}
    overrides = {}
    for key, value in data.items():
        if key not in by_name:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            overrides[key] = _coerce(by_name[key], value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config key {key!r}: {e}") from None
    return replace(cfg, **overrides)


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def config_to_text(cfg):
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(TrainConfig))


@dataclass
class TrainResult:
    model: DialogueModel
    records: list
    checkpoint_path: str
    stopped_early: bool
    final_perplexity: float | None


def train(config, dialogues, checkpoint_dir, resume_from=None, eval_dialogues=None,
          log_fn=None):
    """Run the full training loop over a dialogue corpus.

    The per-epoch shuffle and per-batch noise come from streams derived
    from (seed, epoch, batch), so resuming from a checkpoint at an epoch
    boundary replays exactly the run that never stopped.
    """
    checkpoint_path = os.path.join(checkpoint_dir, "model.ckpt")
    probe = os.path.join(checkpoint_dir, ".write_probe")
    try:
        os.makedirs(checkpoint_dir, exist_ok=True)
        with open(probe, "w") as f:
            f.write("")
        os.remove(probe)
    except OSError as e:
        raise OSError(f"checkpoint directory {checkpoint_dir} is not writable: {e}") from None

    start_epoch = 0
    iteration = 0
    if resume_from is not None:
        from .model import load_checkpoint
        model, extra = load_checkpoint(resume_from)
        start_epoch = int(extra.get("epoch", -1)) + 1
        iteration = int(extra.get("iteration", 0))
        optimizer = OptimizerState(
            extra.get("learning_rate", config.learning_rate),
            config.decay_factor, config.clip_norm)
        optimizer.adversarial_loss_history = list(extra.get("loss_history", []))
        vocab = model.vocab
    else:
        vocab = build_vocab(dialogues, config.vocab_max)
        model = DialogueModel(config.dims(), vocab, seed=config.seed)
        optimizer = OptimizerState(config.learning_rate, config.decay_factor, config.clip_norm)

    noise_spec = NoiseSpec(config.noise_level, config.noise_dim, 1.0)
    weights = config.weights()
    gates = config.gates()
    root = RandomStream(config.seed)
    records = []
    stopped_early = False
    final_ppl = None

    def checkpoint_extra(epoch):
        return {"epoch": epoch, "iteration": iteration,
                "learning_rate": optimizer.learning_rate,
                "loss_history": optimizer.adversarial_loss_history[-3:],
                "noise_level": config.noise_level}

    for epoch in range(start_epoch, config.epochs):
        order = root.derive("epoch", epoch, "order").permutation(len(dialogues))
        shuffled = [dialogues[i] for i in order]
        for b_idx, batch in enumerate(make_batches(shuffled, config.batch_size, vocab)):
            it_rng = root.derive("epoch", epoch, "batch", b_idx)
            row = train_iteration(model, batch, weights, gates, optimizer, noise_spec,
                                  it_rng, iteration=iteration, epoch=epoch)
            records.append(row)
            iteration += 1
        if log_fn is not None and records:
            log_fn(records[-1])
        if config.early_stop_perplexity is not None and config.eval_every:
            if (epoch + 1) % config.eval_every == 0:
                from .metrics import perplexity
                final_ppl = perplexity(model, eval_dialogues or dialogues)
                if final_ppl <= config.early_stop_perplexity:
                    stopped_early = True
                    save_checkpoint(model, checkpoint_path, checkpoint_extra(epoch))
                    break
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(model, checkpoint_path, checkpoint_extra(epoch))
    if not stopped_early:
        save_checkpoint(model, checkpoint_path, checkpoint_extra(config.epochs - 1))
    return TrainResult(model, records, checkpoint_path, stopped_early, final_ppl)

"""Generator/discriminator bundle, parameter groups, and checkpoint files.

Checkpoints are single binary artifacts: a magic tag, a JSON header
(format version, dimensions, vocabulary, parameter manifest, free-form
extras), then every parameter's float64 little-endian bytes in declaration
order. Loading reconstructs the model from the header alone and rejects
any structural mismatch.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import RandomStream
from .corpus import Vocab
from .discriminator import Discriminator
from .generator import Generator

__all__ = ["ModelDims", "DialogueModel", "CheckpointError",
           "save_checkpoint", "load_checkpoint", "parameter_hash"]

_MAGIC = b"DLGM"
_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


@dataclass(frozen=True)
class ModelDims:
    """Structural hyperparameters shared by generator and discriminator."""

    embed_dim: int = 32
    hidden_dim: int = 32
    num_layers: int = 1
    noise_dim: int = 32
    use_attention: bool = True

    def __post_init__(self):
        for field in ("embed_dim", "hidden_dim", "num_layers", "noise_dim"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")


class DialogueModel:
    """One trainable artifact: shared embedding, generator, discriminator."""

    def __init__(self, dims, vocab, seed=0):
        self.dims = dims
        self.vocab = vocab
        self.seed = int(seed)
        rng = RandomStream(seed).derive("init")
        self.generator = Generator(
            vocab_size=len(vocab),
            embed_dim=dims.embed_dim,
            hidden_dim=dims.hidden_dim,
            num_layers=dims.num_layers,
            noise_dim=dims.noise_dim,
            rng=rng,
            use_attention=dims.use_attention,
        )
        self.discriminator = Discriminator(
            embedding=self.generator.embedding,
            hidden_dim=dims.hidden_dim,
            num_layers=dims.num_layers,
            context_dim=dims.hidden_dim,
            rng=rng,
        )

    def parameters(self):
        """Every distinct parameter, in fixed declaration order."""
        seen = set()
        out = []
        for p in self.generator.parameters() + self.discriminator.own_parameters():
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
        return out

    def generator_parameters(self):
        """The generator's update group (embedding included)."""
        return self.generator.parameters()

    def discriminator_parameters(self):
        """The discriminator's update group: its own parameters plus the
        shared embedding and the context pathway it scores against."""
        g = self.generator
        shared = g.embedding.params() + g.utterance_encoder.params() + g.context_rnn.params()
        return self.discriminator.own_parameters() + shared

    def zero_all_grads(self):
        for p in self.parameters():
            p.zero_grad()


def parameter_hash(model):
    """SHA-256 over every parameter's bytes, in declaration order."""
    h = hashlib.sha256()
    for p in model.parameters():
        h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return h.hexdigest()


def save_checkpoint(model, path, extra=None):
    params = model.parameters()
    header = {
        "format_version": _FORMAT_VERSION,
        "dims": asdict(model.dims),
        "seed": model.seed,
        "vocab": model.vocab.id_to_token[3:],
        "vocab_hash": model.vocab.content_hash(),
        "params": [{"name": p.name, "shape": list(p.data.shape)} for p in params],
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in params:
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild a model from a checkpoint; returns (model, extra dict)."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None
    if header.get("format_version") != _FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')!r}")

    vocab = Vocab(header["vocab"])
    if vocab.content_hash() != header.get("vocab_hash"):
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    try:
        dims = ModelDims(**header["dims"])
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: invalid dims: {e}") from None
    model = DialogueModel(dims, vocab, seed=header.get("seed", 0))
    params = model.parameters()
    manifest = header.get("params", [])
    if len(manifest) != len(params):
        raise CheckpointError(
            f"{path}: parameter count mismatch (file {len(manifest)}, model {len(params)})")

    offset = 8 + header_len
    for p, entry in zip(params, manifest):
        if entry["name"] != p.name or tuple(entry["shape"]) != p.data.shape:
            raise CheckpointError(
                f"{path}: parameter mismatch: file has {entry['name']}{entry['shape']}, "
                f"model expects {p.name}{list(p.data.shape)}")
        nbytes = p.data.size * 8
        block = raw[offset : offset + nbytes]
        if len(block) != nbytes:
            raise CheckpointError(f"{path}: truncated data for parameter {p.name}")
        p.value.data = np.frombuffer(block, dtype="<f8").reshape(p.data.shape).copy()
        p.value.grad = np.zeros_like(p.value.data)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return model, header.get("extra", {})

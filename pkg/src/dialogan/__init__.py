"""Desk-scale adversarial dialogue modeling laboratory.

A from-scratch numpy stack for conditional-GAN dialogue models: an
attention-augmented hierarchical recurrent encoder-decoder generator with
Gaussian noise injection, a word-level bidirectional RNN discriminator that
shares the generator's embeddings and dialogue context, accuracy-gated
adversarial training, and discriminator-ranked multi-sample decoding.
"""

__version__ = "0.1.0"

from .autodiff import (
    OptimizerState,
    Parameter,
    RandomStream,
    ShapeError,
    Tensor,
    apply_primitive,
    backward,
    clip_and_step,
    maybe_decay_lr,
    xavier_init,
)

__all__ = [
    "Tensor",
    "Parameter",
    "RandomStream",
    "OptimizerState",
    "ShapeError",
    "apply_primitive",
    "backward",
    "xavier_init",
    "clip_and_step",
    "maybe_decay_lr",
    "__version__",
]

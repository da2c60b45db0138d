"""Egocentric action recognition: latent-region frame scoring, a two-level
LSTM over frames and shots, and the augmentation and evaluation tooling
around them."""

__version__ = "0.1.0"

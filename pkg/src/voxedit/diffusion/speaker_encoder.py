"""Global timbre encoder: convolutional stack with attentive statistics pooling.

Produces a fixed-length utterance embedding from a mel matrix of any length.
Pooling collapses time with attention-weighted mean and standard deviation,
so constant inputs are invariant to time reversal by construction.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..layers import Conv1d, Linear, Module
from ..numerics import Tensor, concat

__all__ = ["SpeakerEncoder"]


class SpeakerEncoder(Module):
    def __init__(self, mel_bins: int, embed_dim: int, rng, channels: int = 32):
        self.conv1 = Conv1d(mel_bins, channels, 3, rng)
        self.conv2 = Conv1d(channels, channels, 3, rng)
        self.attn_hidden = Linear(channels, channels, rng)
        self.attn_score = Linear(channels, 1, rng)
        self.proj = Linear(2 * channels, embed_dim, rng)
        self.embed_dim = embed_dim

    def __call__(self, mel: Tensor) -> Tensor:
        mel = Tensor._lift(mel)
        single = mel.ndim == 2
        if single:
            mel = mel.reshape(1, *mel.shape)
        if mel.shape[2] == 0:
            raise ContractError("cannot encode an empty mel")
        h = self.conv1(mel).tanh()
        h = self.conv2(h).tanh()  # (B, C, L)
        seq = h.transpose(0, 2, 1)  # (B, L, C)
        scores = self.attn_score(self.attn_hidden(seq).tanh())  # (B, L, 1)
        weights = scores.softmax(axis=1)
        mean = (seq * weights).sum(axis=1)  # (B, C)
        centered = seq - mean.reshape(mean.shape[0], 1, mean.shape[1])
        var = (centered * centered * weights).sum(axis=1)
        std = (var + 1e-8).sqrt()
        out = self.proj(concat([mean, std], axis=1))
        return out.reshape(-1) if single else out

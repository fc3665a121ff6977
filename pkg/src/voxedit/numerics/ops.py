"""Structured tensor primitives: 1-D convolution, unfolding, pooling, resampling.

All operate on (batch, channels, time) layouts and carry custom backward
rules; they are the workhorses of the convolutional and attention stacks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError
from .tensor import Tensor

__all__ = ["conv1d", "unfold1d", "avg_pool1d", "upsample1d"]


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (B, Cin, T) with kernels ``w`` (Cout, Cin, K).

    Zero-pads ``padding`` samples on both ends; output length is
    (T + 2*padding - K) // stride + 1.
    """
    x = Tensor._lift(x)
    w = Tensor._lift(w)
    B, Cin, T = x.data.shape
    Cout, Cin_w, K = w.data.shape
    if Cin != Cin_w:
        raise ContractError(f"conv1d channel mismatch: input {Cin}, kernel {Cin_w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride]  # (B, Cin, Tout, K)
    out = np.einsum("bitk,oik->bot", win, w.data, optimize=True)
    if b is not None:
        out = out + b.data[None, :, None]

    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        w._accumulate(np.einsum("bot,bitk->oik", g, win, optimize=True))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2)))
        gx = np.zeros_like(xp)
        Tout = g.shape[2]
        for k in range(K):
            gx[:, :, k:k + stride * Tout:stride] += np.einsum(
                "bot,oi->bit", g, w.data[:, :, k], optimize=True)
        x._accumulate(gx[:, :, padding:padding + T] if padding else gx)

    return Tensor._from_op(out, parents, back)


def unfold1d(x: Tensor, width: int, pad_left: int = 0, pad_right: int = 0) -> Tensor:
    """Sliding windows over the last axis of ``x`` (B, T) -> (B, Tout, width)."""
    x = Tensor._lift(x)
    B, T = x.data.shape
    xp = np.pad(x.data, ((0, 0), (pad_left, pad_right)))
    win = sliding_window_view(xp, width, axis=1)  # (B, Tout, width)
    out = np.ascontiguousarray(win)

    def back(g):
        gx = np.zeros_like(xp)
        for k in range(width):
            gx[:, k:k + g.shape[1]] += g[:, :, k]
        x._accumulate(gx[:, pad_left:pad_left + T])

    return Tensor._from_op(out, (x,), back)


def avg_pool1d(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping mean pooling along time; T must be divisible by factor."""
    if factor == 1:
        return x
    x = Tensor._lift(x)
    B, C, T = x.data.shape
    if T % factor:
        raise ContractError(f"avg_pool1d: length {T} not divisible by {factor}")
    out = x.data.reshape(B, C, T // factor, factor).mean(axis=3)

    def back(g):
        x._accumulate(np.repeat(g, factor, axis=2) / factor)

    return Tensor._from_op(out, (x,), back)


def upsample1d(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor repetition along time: (B, C, T) -> (B, C, T*factor)."""
    if factor == 1:
        return x
    x = Tensor._lift(x)
    B, C, T = x.data.shape
    out = np.repeat(x.data, factor, axis=2)

    def back(g):
        x._accumulate(g.reshape(B, C, T, factor).sum(axis=3))

    return Tensor._from_op(out, (x,), back)

"""Trainable building blocks shared by the synthesis and editing modules.

Everything here is a ``Module``: a named collection of parameters that
supports checkpointing through the binary container format. Initialization
is always driven by an explicit ``RngState`` so model construction is
deterministic under a seed.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .numerics import Parameter, Tensor, concat, conv1d
from .numerics.rng import RngState

__all__ = ["Module", "Linear", "Conv1d", "LayerNorm", "GroupNorm",
           "LSTMCell", "GRUCell", "MultiHeadSelfAttention", "Dropout"]


class Module:
    """Base class providing a recursive, name-addressable parameter registry."""

    def parameters(self, prefix: str = "") -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Parameter):
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.parameters(prefix=f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.parameters(prefix=f"{key}.{i}."))
                    elif isinstance(item, Parameter):
                        out[f"{key}.{i}"] = item
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ContractError(f"state dict is missing parameters: {sorted(missing)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ContractError(
                    f"shape mismatch for {k}: checkpoint {arr.shape}, model {p.data.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())


def _uniform_init(rng: RngState, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: RngState,
                 bias: bool = True, zero_init: bool = False):
        if zero_init:
            w = np.zeros((out_dim, in_dim))
        else:
            w = _uniform_init(rng, (out_dim, in_dim), in_dim)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        # x: (..., in_dim)
        out = x @ self.weight.transpose() if x.ndim >= 2 else None
        if out is None:
            out = x.reshape(1, -1) @ self.weight.transpose()
            out = out.reshape(-1)
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv1d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: RngState,
                 stride: int = 1, padding: int | None = None, bias: bool = True,
                 zero_init: bool = False):
        if padding is None:
            padding = (kernel - 1) // 2
        fan_in = in_ch * kernel
        if zero_init:
            w = np.zeros((out_ch, in_ch, kernel))
        else:
            w = _uniform_init(rng, (out_ch, in_ch, kernel), fan_in)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_ch)) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, stride=self.stride,
                      padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gamma + self.beta


class GroupNorm(Module):
    """Group normalization over (B, C, T) with per-channel affine."""

    def __init__(self, groups: int, channels: int, eps: float = 1e-5):
        if channels % groups:
            raise ContractError(f"channels {channels} not divisible by groups {groups}")
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.groups = groups
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        B, C, T = x.shape
        g = self.groups
        xg = x.reshape(B, g, C // g, T)
        mu = xg.mean(axis=(2, 3), keepdims=True)
        centered = xg - mu
        var = (centered * centered).mean(axis=(2, 3), keepdims=True)
        normed = (centered / (var + self.eps).sqrt()).reshape(B, C, T)
        return normed * self.gamma.reshape(1, C, 1) + self.beta.reshape(1, C, 1)


class LSTMCell(Module):
    def __init__(self, in_dim: int, hidden: int, rng: RngState):
        self.w_x = Parameter(_uniform_init(rng, (4 * hidden, in_dim), in_dim))
        self.w_h = Parameter(_uniform_init(rng, (4 * hidden, hidden), hidden))
        self.bias = Parameter(np.zeros(4 * hidden))
        self.hidden = hidden

    def init_state(self, batch: int) -> tuple[Tensor, Tensor]:
        zeros = np.zeros((batch, self.hidden))
        return Tensor(zeros), Tensor(zeros.copy())

    def __call__(self, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
        h, c = state
        gates = x @ self.w_x.transpose() + h @ self.w_h.transpose() + self.bias
        H = self.hidden
        i = gates[:, :H].sigmoid()
        f = gates[:, H:2 * H].sigmoid()
        g = gates[:, 2 * H:3 * H].tanh()
        o = gates[:, 3 * H:].sigmoid()
        c_new = f * c + i * g
        h_new = o * c_new.tanh()
        return h_new, c_new


class GRUCell(Module):
    def __init__(self, in_dim: int, hidden: int, rng: RngState):
        self.w_x = Parameter(_uniform_init(rng, (3 * hidden, in_dim), in_dim))
        self.w_h = Parameter(_uniform_init(rng, (3 * hidden, hidden), hidden))
        self.bias = Parameter(np.zeros(3 * hidden))
        self.hidden = hidden

    def init_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden)))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        H = self.hidden
        gx = x @ self.w_x.transpose()
        gh = h @ self.w_h.transpose()
        r = (gx[:, :H] + gh[:, :H] + self.bias[:H]).sigmoid()
        z = (gx[:, H:2 * H] + gh[:, H:2 * H] + self.bias[H:2 * H]).sigmoid()
        n = (gx[:, 2 * H:] + r * gh[:, 2 * H:] + self.bias[2 * H:]).tanh()
        return (1.0 - z) * n + z * h


class MultiHeadSelfAttention(Module):
    """Standard scaled dot-product self-attention over (B, T, D)."""

    def __init__(self, dim: int, heads: int, rng: RngState):
        if dim % heads:
            raise ContractError(f"dim {dim} not divisible by heads {heads}")
        self.qkv = Linear(dim, 3 * dim, rng)
        self.out = Linear(dim, dim, rng)
        self.heads = heads
        self.dim = dim

    def __call__(self, x: Tensor) -> Tensor:
        B, T, D = x.shape
        h = self.heads
        dk = D // h
        qkv = self.qkv(x)  # (B, T, 3D)
        q = qkv[:, :, :D].reshape(B, T, h, dk).transpose(0, 2, 1, 3).reshape(B * h, T, dk)
        k = qkv[:, :, D:2 * D].reshape(B, T, h, dk).transpose(0, 2, 1, 3).reshape(B * h, T, dk)
        v = qkv[:, :, 2 * D:].reshape(B, T, h, dk).transpose(0, 2, 1, 3).reshape(B * h, T, dk)
        scores = q @ k.transpose(0, 2, 1) * (1.0 / np.sqrt(dk))
        attn = scores.softmax(axis=-1)
        ctx = attn @ v  # (B*h, T, dk)
        ctx = ctx.reshape(B, h, T, dk).transpose(0, 2, 1, 3).reshape(B, T, D)
        return self.out(ctx)


class Dropout(Module):
    """Inverted dropout; a draw from ``rng`` per call when active."""

    def __init__(self, p: float):
        self.p = p

    def __call__(self, x: Tensor, rng: RngState | None = None) -> Tensor:
        if self.p <= 0.0 or rng is None:
            return x
        keep = 1.0 - self.p
        mask = (rng.uniform(0.0, 1.0, x.shape) < keep) / keep
        return x * Tensor(mask)

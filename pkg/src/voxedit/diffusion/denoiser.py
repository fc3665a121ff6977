"""Desk-scale conditional 1-D U-Net velocity predictor.

Each block processes (batch, channels, time) data through a convolutional
residual item, a modulation item that applies an affine (scale, shift)
predicted from the global condition, a MergeAdd item that injects the
processed local condition at the block's temporal resolution, and a
self-attention item. Skip connections are merged by channel concatenation
followed by a projection. The final projection is zero-initialized so an
untrained model predicts zero velocity.

The global condition is the concatenation of the speaker embedding and a
sinusoidal embedding of the diffusion time; the local condition is the
content sequence upsampled x4 to the mel frame rate and refined by a small
residual convolutional stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError
from ..layers import Conv1d, GroupNorm, Linear, Module, MultiHeadSelfAttention
from ..numerics import Tensor, avg_pool1d, concat, upsample1d
from ..numerics.rng import RngState

__all__ = ["DenoiserConfig", "Denoiser", "time_embedding"]


@dataclass
class DenoiserConfig:
    mel_bins: int = 24
    content_dim: int = 16
    speaker_dim: int = 32
    channels: tuple[int, ...] = (16, 32, 64)
    downsample_factors: tuple[int, ...] = (1, 2, 2)
    attention_heads: int = 2
    resnet_groups: int = 8
    time_embed_dim: int = 16
    local_channels: int = 16
    content_upsample: int = 4

    def __post_init__(self):
        if len(self.channels) != len(self.downsample_factors):
            raise ConfigError("channels and downsample_factors must align")
        if self.downsample_factors[0] != 1:
            raise ConfigError("the first block must keep full resolution")

    @property
    def total_downsample(self) -> int:
        return int(np.prod(self.downsample_factors))


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of diffusion times, with schedule features appended.

    The last four channels carry the mixing coefficients and their stabilized
    ratios, which let the modulation items express the large input gains the
    velocity target requires near the ends of the schedule. Output is
    (B, dim + 4).
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(200.0), half))
    ang = t[:, None] * freqs[None, :]
    a = np.cos(t * np.pi / 2.0)[:, None]
    b = np.sin(t * np.pi / 2.0)[:, None]
    ratios = np.concatenate([a, b, a / (b + 0.05), b / (a + 0.05)], axis=1)
    return np.concatenate([np.sin(ang), np.cos(ang), ratios], axis=1)


class UNetBlock(Module):
    def __init__(self, ch: int, global_dim: int, local_ch: int, heads: int,
                 groups: int, rng: RngState):
        g = min(groups, ch)
        self.conv1 = Conv1d(ch, ch, 3, rng)
        self.norm1 = GroupNorm(g, ch)
        self.conv2 = Conv1d(ch, ch, 3, rng)
        self.norm2 = GroupNorm(g, ch)
        self.modulation = Linear(global_dim, 2 * ch, rng)
        self.local_proj = Conv1d(local_ch, ch, 1, rng)
        self.attention = MultiHeadSelfAttention(ch, heads, rng)
        self.ch = ch

    def __call__(self, h: Tensor, global_cond: Tensor, local_cond: Tensor) -> Tensor:
        # ResNet item
        r = self.norm1(self.conv1(h)).silu()
        r = self.norm2(self.conv2(r))
        h = (h + r).silu()
        # modulation item: affine from the global condition
        mod = self.modulation(global_cond)  # (B, 2*ch)
        scale = mod[:, :self.ch].reshape(-1, self.ch, 1)
        shift = mod[:, self.ch:].reshape(-1, self.ch, 1)
        h = h * (scale + 1.0) + shift
        # MergeAdd item: local condition at this resolution
        h = h + self.local_proj(local_cond)
        # self-attention item
        seq = h.transpose(0, 2, 1)
        h = h + self.attention(seq).transpose(0, 2, 1)
        return h


class Denoiser(Module):
    """Velocity predictor v_hat = f(x_t; t, speaker embedding, content)."""

    def __init__(self, cfg: DenoiserConfig, rng: RngState):
        self.cfg = cfg
        c = cfg.channels
        global_dim = cfg.speaker_dim + cfg.time_embed_dim + 4

        self.in_conv = Conv1d(cfg.mel_bins, c[0], 3, rng)
        self.local_in = Conv1d(cfg.content_dim, cfg.local_channels, 3, rng)
        self.local_res = Conv1d(cfg.local_channels, cfg.local_channels, 3, rng)

        self.down_blocks = [UNetBlock(ch, global_dim, cfg.local_channels,
                                      cfg.attention_heads, cfg.resnet_groups, rng)
                            for ch in c]
        self.down_convs = [Conv1d(c[i - 1], c[i], 3, rng,
                                  stride=cfg.downsample_factors[i], padding=1)
                           for i in range(1, len(c))]
        self.up_convs = [Conv1d(c[i], c[i - 1], 3, rng)
                         for i in range(len(c) - 1, 0, -1)]
        self.merge_convs = [Conv1d(2 * c[i - 1], c[i - 1], 1, rng)
                            for i in range(len(c) - 1, 0, -1)]
        self.up_blocks = [UNetBlock(c[i - 1], global_dim, cfg.local_channels,
                                    cfg.attention_heads, cfg.resnet_groups, rng)
                          for i in range(len(c) - 1, 0, -1)]
        self.out_conv = Conv1d(c[0], cfg.mel_bins, 3, rng, zero_init=True)
        # schedule-gated linear path; the velocity target carries an x_t term
        # whose gain grows without bound near the schedule ends
        self.gain = Linear(global_dim, 1, rng, zero_init=True)

    # -- conditioning --------------------------------------------------------

    def _conditions(self, t, e_s: Tensor, e_c: Tensor, frames: int):
        cfg = self.cfg
        if e_c.ndim != 3:
            raise ContractError("content condition must be (B, D_C, L/4)")
        local = upsample1d(e_c, cfg.content_upsample)
        if local.shape[2] != frames:
            raise ContractError(
                f"content length {e_c.shape[2]} * {cfg.content_upsample} != "
                f"mel frames {frames}")
        local = self.local_in(local).tanh()
        local = local + self.local_res(local)
        t_emb = Tensor(time_embedding(t, cfg.time_embed_dim))
        if t_emb.shape[0] == 1 and e_s.shape[0] > 1:
            t_emb = Tensor(np.repeat(t_emb.data, e_s.shape[0], axis=0))
        global_cond = concat([e_s, t_emb], axis=1)
        return global_cond, local

    def __call__(self, x_t: Tensor, t, e_s: Tensor, e_c: Tensor) -> Tensor:
        x_t = Tensor._lift(x_t)
        e_s = Tensor._lift(e_s)
        e_c = Tensor._lift(e_c)
        single = x_t.ndim == 2
        if single:
            x_t = x_t.reshape(1, *x_t.shape)
            e_s = e_s.reshape(1, -1) if e_s.ndim == 1 else e_s
            e_c = e_c.reshape(1, *e_c.shape) if e_c.ndim == 2 else e_c
        B, F, L = x_t.shape
        if L % self.cfg.total_downsample:
            raise ContractError(f"frame count {L} must be divisible by "
                                f"{self.cfg.total_downsample}")
        global_cond, local = self._conditions(t, e_s, e_c, L)

        h = self.in_conv(x_t)
        factor = 1
        skips = []
        for i, block in enumerate(self.down_blocks):
            if i > 0:
                skips.append(h)
                h = self.down_convs[i - 1](h)
                factor *= self.cfg.downsample_factors[i]
            h = block(h, global_cond, avg_pool1d(local, factor))
        for up, merge, block in zip(self.up_convs, self.merge_convs, self.up_blocks):
            factor //= self.cfg.downsample_factors[len(skips)]
            h = up(upsample1d(h, self.cfg.downsample_factors[len(skips)]))
            h = merge(concat([h, skips.pop()], axis=1))
            h = block(h, global_cond, avg_pool1d(local, factor))
        out = self.out_conv(h)
        # bounded gate times the schedule ratio; the ratio supplies the large
        # gain the gate itself never has to learn
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        ratio = np.cos(t_arr * np.pi / 2) / (np.sin(t_arr * np.pi / 2) + 0.005)
        if ratio.shape[0] == 1 and B > 1:
            ratio = np.repeat(ratio, B)
        gate = self.gain(global_cond).tanh() * Tensor(ratio[:, None])
        out = out + gate.reshape(B, 1, 1) * x_t
        return out.reshape(F, L) if single else out

    @property
    def mel_bins(self) -> int:
        return self.cfg.mel_bins

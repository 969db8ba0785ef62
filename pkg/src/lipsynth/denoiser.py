"""Noise-prediction network.

An encoder-decoder UNet over the channel-concatenated [noisy frame;
reference frame] input, with residual blocks, self-attention at the lower
resolutions, and a fused time+audio conditioning vector injected into every
residual block as a per-channel scale-shift after normalization.  The audio
window is encoded by a strided-convolution encoder built from the same
residual block family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class DenoiserConfig:
    image_size: int = 64
    in_channels: int = 6
    out_channels: int = 3
    base_channels: int = 64
    channel_mults: tuple = (1, 2, 3)
    attention_levels: tuple = (1, 2)
    embed_dim: int = 256
    blocks_per_level: int = 2
    norm_groups: int = 8
    audio_base_channels: int = 32
    fusion: str = "sum"  # "sum" | "concat"

    def __post_init__(self):
        levels = len(self.channel_mults)
        if self.image_size % (1 << (levels - 1)) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{levels - 1}"
            )
        if self.in_channels != 6:
            raise ValueError("backbone expects 6 input channels (frame + reference)")
        for mult in self.channel_mults:
            if (self.base_channels * mult) % self.norm_groups != 0:
                raise ValueError(
                    f"channels {self.base_channels * mult} not divisible by "
                    f"norm_groups {self.norm_groups}"
                )
        if self.fusion not in ("sum", "concat"):
            raise ValueError(f"fusion must be 'sum' or 'concat', got {self.fusion}")

    @staticmethod
    def from_config(cfg: dict) -> "DenoiserConfig":
        return DenoiserConfig(
            image_size=cfg["model.image_size"],
            base_channels=cfg["model.base_channels"],
            channel_mults=tuple(cfg["model.channel_mults"]),
            attention_levels=tuple(cfg["model.attention_levels"]),
            embed_dim=cfg["model.embed_dim"],
            blocks_per_level=cfg["model.blocks_per_level"],
            norm_groups=cfg["model.norm_groups"],
            audio_base_channels=cfg["model.audio_base_channels"],
            fusion=cfg["model.fusion"],
        )


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64) / half
    ).to(t.device)
    args = t.double()[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb.to(torch.float32 if t.dtype != torch.float64 else torch.float64)


class ResBlock(nn.Module):
    """GroupNorm/SiLU/conv residual block; the conditioning vector modulates
    the second normalization as (1 + scale, shift)."""

    def __init__(self, in_ch, out_ch, embed_dim=None, groups=8):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.embed_proj = (
            nn.Linear(embed_dim, 2 * out_ch) if embed_dim is not None else None
        )
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb=None):
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.norm2(h)
        if self.embed_proj is not None and emb is not None:
            scale, shift = self.embed_proj(F.silu(emb))[:, :, None, None].chunk(2, dim=1)
            h = h * (1 + scale) + shift
        h = self.conv2(F.silu(h))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    def __init__(self, channels, groups=8, heads=4):
        super().__init__()
        self.heads = heads
        self.norm = nn.GroupNorm(groups, channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.heads, c // self.heads, h * w)
        q, k, v = qkv.unbind(1)
        attn = torch.softmax(q.transpose(-1, -2) @ k / math.sqrt(c // self.heads), dim=-1)
        out = (v @ attn.transpose(-1, -2)).reshape(b, c, h, w)
        return x + self.proj(out)


class AudioEncoder(nn.Module):
    """Strided residual encoder mapping a (B, 16, 80) mel window to a single
    embedding vector."""

    def __init__(self, base_channels=32, embed_dim=256, groups=8):
        super().__init__()
        c = base_channels
        self.stem = nn.Conv2d(1, c, 3, padding=1)
        self.blocks = nn.ModuleList(
            [
                ResBlock(c, c, groups=groups),
                nn.Conv2d(c, c, 3, stride=2, padding=1),        # 8 x 40
                ResBlock(c, 2 * c, groups=groups),
                nn.Conv2d(2 * c, 2 * c, 3, stride=2, padding=1),  # 4 x 20
                ResBlock(2 * c, 2 * c, groups=groups),
                nn.Conv2d(2 * c, 2 * c, 3, stride=2, padding=1),  # 2 x 10
                ResBlock(2 * c, 4 * c, groups=groups),
            ]
        )
        self.norm = nn.GroupNorm(groups, 4 * c)
        self.out = nn.Linear(4 * c, embed_dim)

    def forward(self, a):
        if a.ndim != 3 or a.shape[1:] != (16, 80):
            raise ValueError(f"audio window must be (B, 16, 80), got {tuple(a.shape)}")
        h = self.stem(a[:, None])
        for block in self.blocks:
            h = block(h)
        h = F.silu(self.norm(h)).mean(dim=(2, 3))
        return self.out(h)


class Denoiser(nn.Module):
    """epsilon-predictor conditioned on a reference frame, an audio window,
    and the diffusion step."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        cfg = config
        g = cfg.norm_groups
        chans = [cfg.base_channels * m for m in cfg.channel_mults]
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.embed_dim, cfg.embed_dim),
            nn.SiLU(),
            nn.Linear(cfg.embed_dim, cfg.embed_dim),
        )
        self.audio_encoder = AudioEncoder(cfg.audio_base_channels, cfg.embed_dim, groups=g)
        if cfg.fusion == "concat":
            self.fuse = nn.Linear(2 * cfg.embed_dim, cfg.embed_dim)
        else:
            self.fuse = None

        self.stem = nn.Conv2d(cfg.in_channels, chans[0], 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        skip_chans = [chans[0]]
        ch = chans[0]
        for level, out_ch in enumerate(chans):
            blocks, attns = nn.ModuleList(), nn.ModuleList()
            for _ in range(cfg.blocks_per_level):
                blocks.append(ResBlock(ch, out_ch, cfg.embed_dim, groups=g))
                attns.append(
                    AttentionBlock(out_ch, groups=g)
                    if level in cfg.attention_levels
                    else nn.Identity()
                )
                ch = out_ch
                skip_chans.append(ch)
            self.down_blocks.append(blocks)
            self.down_attn.append(attns)
            if level < len(chans) - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
                skip_chans.append(ch)

        self.mid1 = ResBlock(ch, ch, cfg.embed_dim, groups=g)
        self.mid_attn = AttentionBlock(ch, groups=g)
        self.mid2 = ResBlock(ch, ch, cfg.embed_dim, groups=g)

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level in reversed(range(len(chans))):
            out_ch = chans[level]
            blocks, attns = nn.ModuleList(), nn.ModuleList()
            for _ in range(cfg.blocks_per_level + 1):
                blocks.append(ResBlock(ch + skip_chans.pop(), out_ch, cfg.embed_dim, groups=g))
                attns.append(
                    AttentionBlock(out_ch, groups=g)
                    if level in cfg.attention_levels
                    else nn.Identity()
                )
                ch = out_ch
            self.up_blocks.append(blocks)
            self.up_attn.append(attns)
            if level > 0:
                self.upsamples.append(nn.Conv2d(ch, ch, 3, padding=1))

        self.out_norm = nn.GroupNorm(g, ch)
        self.out_conv = nn.Conv2d(ch, cfg.out_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def conditioning(self, t: torch.Tensor, audio: torch.Tensor) -> torch.Tensor:
        dtype = next(self.parameters()).dtype
        temb = self.time_mlp(timestep_embedding(t, self.config.embed_dim).to(dtype))
        aemb = self.audio_encoder(audio.to(dtype))
        if self.fuse is not None:
            return self.fuse(torch.cat([temb, aemb], dim=-1))
        return temb + aemb

    def forward(self, x_t, x_r, audio, t):
        if x_t.shape != x_r.shape:
            raise ValueError(f"frame/reference shape mismatch: {x_t.shape} vs {x_r.shape}")
        if x_t.shape[-1] != self.config.image_size or x_t.shape[1] != 3:
            raise ValueError(
                f"expected (B, 3, {self.config.image_size}, {self.config.image_size}), "
                f"got {tuple(x_t.shape)}"
            )
        emb = self.conditioning(t, audio)
        h = self.stem(torch.cat([x_t, x_r], dim=1))
        skips = [h]
        for level, (blocks, attns) in enumerate(zip(self.down_blocks, self.down_attn)):
            for block, attn in zip(blocks, attns):
                h = attn(block(h, emb))
                skips.append(h)
            if level < len(self.downsamples):
                h = self.downsamples[level](h)
                skips.append(h)
        h = self.mid2(self.mid_attn(self.mid1(h, emb)), emb)
        for i, (blocks, attns) in enumerate(zip(self.up_blocks, self.up_attn)):
            for block, attn in zip(blocks, attns):
                h = attn(block(torch.cat([h, skips.pop()], dim=1), emb))
            if i < len(self.upsamples):
                h = F.interpolate(h, scale_factor=2, mode="nearest")
                h = self.upsamples[i](h)
        return self.out_conv(F.silu(self.out_norm(h)))


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def build_denoiser(cfg: dict, seed: int | None = None) -> Denoiser:
    """Construct a denoiser from a flat run config with seeded init."""
    if seed is not None:
        torch.manual_seed(seed)
    return Denoiser(DenoiserConfig.from_config(cfg))

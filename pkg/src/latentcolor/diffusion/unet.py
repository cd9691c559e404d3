"""Denoising U-Net with timestep embedding, text cross-attention, and named
feature taps at the output layer and every down/up-sampling layer."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .text import TextEmbedding

Injector = Callable[[str, torch.Tensor], torch.Tensor]


def timestep_embedding(t: torch.Tensor, dim: int, max_period: int = 10000) -> torch.Tensor:
    """Sinusoidal embeddings for a (B,) integer timestep vector."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, time_dim: int):
        super().__init__()
        self.norm1 = _norm(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, cout)
        self.norm2 = _norm(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(t_emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Spatial queries attending over text tokens."""

    def __init__(self, channels: int, text_dim: int, n_heads: int = 4):
        super().__init__()
        self.norm = _norm(channels)
        self.attn = nn.MultiheadAttention(
            channels, n_heads, kdim=text_dim, vdim=text_dim, batch_first=True
        )
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor, text: TextEmbedding) -> torch.Tensor:
        b, c, h, w = x.shape
        q = self.norm(x).flatten(2).transpose(1, 2)  # (B, HW, C)
        out, _ = self.attn(
            q, text.vectors, text.vectors, key_padding_mask=~text.mask, need_weights=False
        )
        out = out.transpose(1, 2).reshape(b, c, h, w)
        return x + self.proj(out)


@dataclass
class DenoiserConfig:
    in_channels: int = 3
    out_channels: int = 3
    base_channels: int = 48
    channel_mults: tuple = (1, 2)
    n_res_blocks: int = 1
    time_dim: int = 128
    text_dim: int = 64
    attn_levels: tuple = (0, 1)
    n_heads: int = 4

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "n_res_blocks": self.n_res_blocks,
            "time_dim": self.time_dim,
            "text_dim": self.text_dim,
            "attn_levels": list(self.attn_levels),
            "n_heads": self.n_heads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        d["attn_levels"] = tuple(d["attn_levels"])
        return cls(**d)


class Denoiser(nn.Module):
    """U-Net noise predictor. Tap names: "down.{i}", "up.{i}", "out".

    An optional injector callback rewrites the feature at each tap point; a
    collect dict captures the tap features of a forward pass.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        cfg = config
        chans = [cfg.base_channels * m for m in cfg.channel_mults]
        levels = len(chans)
        time_dim = cfg.time_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        self.conv_in = nn.Conv2d(cfg.in_channels, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        skip_chans = [chans[0]]
        ch = chans[0]
        for i in range(levels):
            blocks = nn.ModuleList()
            attns = nn.ModuleList()
            for _ in range(cfg.n_res_blocks):
                blocks.append(ResBlock(ch, chans[i], time_dim))
                ch = chans[i]
                attns.append(
                    CrossAttention(ch, cfg.text_dim, cfg.n_heads)
                    if i in cfg.attn_levels
                    else nn.Identity()
                )
                skip_chans.append(ch)
            self.down_blocks.append(blocks)
            self.down_attn.append(attns)
            if i < levels - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
                skip_chans.append(ch)

        self.mid_block1 = ResBlock(ch, ch, time_dim)
        self.mid_attn = CrossAttention(ch, cfg.text_dim, cfg.n_heads)
        self.mid_block2 = ResBlock(ch, ch, time_dim)

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(levels)):
            blocks = nn.ModuleList()
            attns = nn.ModuleList()
            for _ in range(cfg.n_res_blocks + 1):
                blocks.append(ResBlock(ch + skip_chans.pop(), chans[i], time_dim))
                ch = chans[i]
                attns.append(
                    CrossAttention(ch, cfg.text_dim, cfg.n_heads)
                    if i in cfg.attn_levels
                    else nn.Identity()
                )
            self.up_blocks.append(blocks)
            self.up_attn.append(attns)
            if i > 0:
                self.upsamples.append(nn.Conv2d(ch, ch, 3, padding=1))

        self.out_norm = _norm(ch)
        self.conv_out = nn.Conv2d(ch, cfg.out_channels, 3, padding=1)

    @property
    def tap_names(self) -> list[str]:
        n_down = len(self.downsamples)
        return [f"down.{i}" for i in range(n_down)] + [
            f"up.{i}" for i in range(n_down)
        ] + ["out"]

    @property
    def tap_channels(self) -> dict:
        """Channel count at every tap, derived from the config alone."""
        chans = [self.config.base_channels * m for m in self.config.channel_mults]
        out = {}
        for i in range(len(chans) - 1):
            out[f"down.{i}"] = chans[i]
        for j in range(len(chans) - 1):
            # The upsample at the end of up-level j still carries that level's width.
            out[f"up.{j}"] = chans[len(chans) - 1 - j]
        out["out"] = self.config.out_channels
        return out

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        text: TextEmbedding,
        injector: Optional[Injector] = None,
        collect: Optional[dict] = None,
    ) -> torch.Tensor:
        def tap(name: str, h: torch.Tensor) -> torch.Tensor:
            if collect is not None:
                collect[name] = h
            if injector is not None:
                h = injector(name, h)
            return h

        if t.dim() == 0:
            t = t.expand(z.shape[0])
        t_emb = self.time_mlp(timestep_embedding(t, self.config.time_dim))

        h = self.conv_in(z)
        skips = [h]
        sizes = []
        for i, (blocks, attns) in enumerate(zip(self.down_blocks, self.down_attn)):
            for block, attn in zip(blocks, attns):
                h = block(h, t_emb)
                if not isinstance(attn, nn.Identity):
                    h = attn(h, text)
                skips.append(h)
            if i < len(self.downsamples):
                sizes.append(h.shape[-2:])
                h = self.downsamples[i](h)
                h = tap(f"down.{i}", h)
                skips.append(h)

        h = self.mid_block1(h, t_emb)
        h = self.mid_attn(h, text)
        h = self.mid_block2(h, t_emb)

        for j, (blocks, attns) in enumerate(zip(self.up_blocks, self.up_attn)):
            for block, attn in zip(blocks, attns):
                h = block(torch.cat([h, skips.pop()], dim=1), t_emb)
                if not isinstance(attn, nn.Identity):
                    h = attn(h, text)
            if j < len(self.upsamples):
                # Restore the exact pre-downsample size (handles odd extents).
                h = F.interpolate(h, size=sizes.pop(), mode="nearest")
                h = self.upsamples[j](h)
                h = tap(f"up.{j}", h)

        out = self.conv_out(F.silu(self.out_norm(h)))
        return tap("out", out)

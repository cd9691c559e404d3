"""Latent autoencoder: encoder, vector-quantized (or KL) bottleneck, and a
decoder that exposes its per-upsampling-level feature maps."""

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.norm1 = _norm(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm2 = _norm(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


@dataclass
class AutoencoderConfig:
    downsample_factor: int = 4
    base_channels: int = 32
    channel_mults: tuple = (1, 2, 2)
    latent_dim: int = 3
    n_codes: int = 512
    bottleneck: str = "vq"  # "vq" or "kl"

    def __post_init__(self):
        f = self.downsample_factor
        if f < 1 or (f & (f - 1)) != 0:
            raise ValueError("downsample_factor must be a power of 2")
        if len(self.channel_mults) != self.n_levels:
            raise ValueError(
                f"channel_mults length {len(self.channel_mults)} != levels {self.n_levels}"
            )
        if self.bottleneck not in ("vq", "kl"):
            raise ValueError("bottleneck must be 'vq' or 'kl'")
        if self.bottleneck == "vq" and self.n_codes < 2:
            raise ValueError("n_codes must be >= 2")

    @property
    def n_levels(self) -> int:
        return int(math.log2(self.downsample_factor)) + 1

    @property
    def channels(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_mults]

    def to_dict(self) -> dict:
        return {
            "downsample_factor": self.downsample_factor,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "latent_dim": self.latent_dim,
            "n_codes": self.n_codes,
            "bottleneck": self.bottleneck,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderConfig":
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        return cls(**d)


@dataclass
class Codebook:
    """Quantizer code table view: (n_codes, dim) entries."""

    entries: torch.Tensor

    def __post_init__(self):
        if self.entries.dim() != 2 or self.entries.shape[0] < 2:
            raise ValueError("codebook needs at least 2 entries of shape (n, dim)")
        if not torch.isfinite(self.entries).all():
            raise ValueError("codebook entries must be finite")

    @property
    def n_codes(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


def quantize_latents(z: torch.Tensor, codebook: Codebook) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Nearest-codebook-entry quantization of a (B, C, H, W) latent.

    Returns (z_q, indices, commit_loss). Gradients pass straight through to z;
    commit_loss is the mean squared latent-to-code distance and carries
    gradients to both the latent and the code entries. Ties pick the lowest
    code index.
    """
    if z.shape[1] != codebook.dim:
        raise ValueError(f"latent dim {z.shape[1]} != codebook dim {codebook.dim}")
    b, c, h, w = z.shape
    flat = z.permute(0, 2, 3, 1).reshape(-1, c)
    d2 = (
        flat.pow(2).sum(1, keepdim=True)
        - 2.0 * flat @ codebook.entries.t()
        + codebook.entries.pow(2).sum(1)[None, :]
    )
    indices = torch.argmin(d2, dim=1)
    z_q = codebook.entries[indices].reshape(b, h, w, c).permute(0, 3, 1, 2)
    commit_loss = torch.mean((z - z_q) ** 2)
    if z.requires_grad:
        # Straight-through: forward takes code values, gradients pass to z.
        z_q = z + (z_q - z).detach()
    return z_q, indices.reshape(b, h, w), commit_loss


class Encoder(nn.Module):
    def __init__(self, config: AutoencoderConfig, in_channels: int = 3):
        super().__init__()
        chans = config.channels
        out_dim = config.latent_dim * (2 if config.bottleneck == "kl" else 1)
        self.conv_in = nn.Conv2d(in_channels, chans[0], 3, padding=1)
        self.blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = chans[0]
        for i, c in enumerate(chans):
            self.blocks.append(ResBlock(ch, c))
            ch = c
            if i < len(chans) - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.mid = ResBlock(ch, ch)
        self.norm_out = _norm(ch)
        self.conv_out = nn.Conv2d(ch, out_dim, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv_in(x)
        for i, block in enumerate(self.blocks):
            h = block(h)
            if i < len(self.downsamples):
                h = self.downsamples[i](h)
        h = self.mid(h)
        return self.conv_out(F.silu(self.norm_out(h)))


class Decoder(nn.Module):
    """Mirror of the encoder; forward returns per-upsampling-level features."""

    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        chans = config.channels
        self.conv_in = nn.Conv2d(config.latent_dim, chans[-1], 3, padding=1)
        self.mid = ResBlock(chans[-1], chans[-1])
        self.blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        ch = chans[-1]
        for i in reversed(range(len(chans))):
            self.blocks.append(ResBlock(ch, chans[i]))
            ch = chans[i]
            if i > 0:
                self.upsamples.append(nn.Conv2d(ch, ch, 3, padding=1))
        self.norm_out = _norm(ch)
        self.conv_out = nn.Conv2d(ch, 3, 3, padding=1)
        self.feature_channels = [c for c in reversed(chans)]

    def forward(
        self, z: torch.Tensor, injections: Optional[list] = None
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Decode a latent; injections[i], when given, is added to level-i features."""
        h = self.mid(self.conv_in(z))
        features = []
        for i, block in enumerate(self.blocks):
            h = block(h)
            if injections is not None and injections[i] is not None:
                h = h + injections[i]
            features.append(h)
            if i < len(self.upsamples):
                h = F.interpolate(h, scale_factor=2, mode="nearest")
                h = self.upsamples[i](h)
        return self.conv_out(F.silu(self.norm_out(h))), features


class Autoencoder(nn.Module):
    """Encoder + bottleneck + feature-exposing decoder over (B, 3, H, W) tensors."""

    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.decoder = Decoder(config)
        if config.bottleneck == "vq":
            self.codes = nn.Parameter(torch.randn(config.n_codes, config.latent_dim) * 0.5)
        else:
            self.codes = None

    @property
    def codebook(self) -> Codebook:
        if self.codes is None:
            raise ValueError("KL bottleneck has no codebook")
        return Codebook(self.codes)

    @property
    def downsample_factor(self) -> int:
        return self.config.downsample_factor

    def check_divisible(self, height: int, width: int) -> None:
        f = self.config.downsample_factor
        if height % f or width % f:
            raise ValueError(f"image size {height}x{width} not divisible by f={f}")

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """Image batch (B, 3, H, W) to latent (B, c, H/f, W/f). H, W must divide f."""
        self.check_divisible(x.shape[2], x.shape[3])
        z = self.encoder(x)
        if self.config.bottleneck == "kl":
            z = z[:, : self.config.latent_dim]  # mean of the posterior
        return z

    def encode_moments(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """KL mode: posterior (mean, logvar)."""
        if self.config.bottleneck != "kl":
            raise ValueError("moments only exist for the KL bottleneck")
        self.check_divisible(x.shape[2], x.shape[3])
        z = self.encoder(x)
        return z.chunk(2, dim=1)

    def quantize(self, z: torch.Tensor) -> tuple[torch.Tensor, Optional[torch.Tensor], torch.Tensor]:
        """Bottleneck pass: nearest-code snap for VQ, identity for KL."""
        if self.config.bottleneck == "vq":
            return quantize_latents(z, self.codebook)
        return z, None, torch.zeros((), dtype=z.dtype, device=z.device)

    def decode(
        self, z: torch.Tensor, clamp: bool = True, injections: Optional[list] = None
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Latent (B, c, h, w) to image (B, 3, h*f, w*f) plus per-level features."""
        if z.shape[1] != self.config.latent_dim:
            raise ValueError(f"latent dim {z.shape[1]} != configured {self.config.latent_dim}")
        x, features = self.decoder(z, injections=injections)
        if clamp:
            x = x.clamp(0.0, 1.0)
        return x, features

    def reconstruct(self, x: torch.Tensor) -> torch.Tensor:
        z_q, _, _ = self.quantize(self.encode(x))
        return self.decode(z_q)[0]

"""Lightness-aware decoding: a grayscale shortcut encoder whose per-level
features are projected by zero-initialized 1x1 convolutions and added into the
frozen decoder's upsampling levels."""

from typing import Optional

import torch
import torch.nn as nn

from .autoencoder.losses import (
    PERCEPTUAL_WEIGHT,
    PatchDiscriminator,
    PerceptualFeatures,
    hinge_d_loss,
    last_layer_adaptive_weight,
    reconstruction_loss,
)
from .autoencoder.model import Autoencoder, AutoencoderConfig, Encoder, ResBlock
from .errors import NonFiniteLossError
from .imageproc.color import LUMA_WEIGHTS


def rgb_batch_to_gray(x: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) to (B, 1, H, W) Rec. 601 luma."""
    w = torch.as_tensor(LUMA_WEIGHTS, dtype=x.dtype, device=x.device)
    return torch.einsum("bchw,c->bhw", x, w)[:, None]


class GrayscaleEncoder(nn.Module):
    """Replica of the autoencoder encoder on 1-channel input, middle blocks
    removed; emits the feature map of every downsampling level."""

    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        chans = config.channels
        self.conv_in = nn.Conv2d(1, chans[0], 3, padding=1)
        self.blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = chans[0]
        for i, c in enumerate(chans):
            self.blocks.append(ResBlock(ch, c))
            ch = c
            if i < len(chans) - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.feature_channels = list(chans)

    def forward(self, g: torch.Tensor) -> list[torch.Tensor]:
        """Features from full resolution down to the latent resolution."""
        features = []
        h = self.conv_in(g)
        for i, block in enumerate(self.blocks):
            h = block(h)
            features.append(h)
            if i < len(self.downsamples):
                h = self.downsamples[i](h)
        return features

    def init_from_encoder(self, encoder: Encoder) -> None:
        """Warm start from a trained color encoder, input kernel summed to 1 channel."""
        with torch.no_grad():
            self.conv_in.weight.copy_(encoder.conv_in.weight.sum(dim=1, keepdim=True))
            self.conv_in.bias.copy_(encoder.conv_in.bias)
            for mine, theirs in zip(self.blocks, encoder.blocks):
                mine.load_state_dict(theirs.state_dict())
            for mine, theirs in zip(self.downsamples, encoder.downsamples):
                mine.load_state_dict(theirs.state_dict())


class LightnessDecoder(nn.Module):
    """Grayscale encoder + per-level zero-init projections over a frozen decoder."""

    def __init__(self, autoencoder: Autoencoder):
        super().__init__()
        # Held outside the module registry: the decoder is frozen and checkpointed
        # as its own block, so this module's state dict is G + projections only.
        self._autoencoder_ref = [autoencoder]
        config = autoencoder.config
        self.gray_encoder = GrayscaleEncoder(config)
        # Decoder levels run deepest-first; pair each with the gray feature of
        # equal spatial size (the gray list reversed).
        gray_chans = list(reversed(self.gray_encoder.feature_channels))
        dec_chans = autoencoder.decoder.feature_channels
        self.projections = nn.ModuleList()
        for g_ch, d_ch in zip(gray_chans, dec_chans):
            proj = nn.Conv2d(g_ch, d_ch, 1)
            nn.init.zeros_(proj.weight)
            nn.init.zeros_(proj.bias)
            self.projections.append(proj)

    @property
    def autoencoder(self) -> Autoencoder:
        return self._autoencoder_ref[0]

    def trainable_parameters(self):
        yield from self.gray_encoder.parameters()
        yield from self.projections.parameters()

    def gray_features(self, g: torch.Tensor) -> list[torch.Tensor]:
        """Per-level shortcut features of a (B, 1, H, W) grayscale batch."""
        self.autoencoder.check_divisible(g.shape[2], g.shape[3])
        return self.gray_encoder(g)

    def inject_decode(
        self, z: torch.Tensor, g: torch.Tensor, clamp: bool = True
    ) -> torch.Tensor:
        """Decode z with grayscale shortcut features added at every upsampling level."""
        f = self.autoencoder.config.downsample_factor
        if g.shape[2] != z.shape[2] * f or g.shape[3] != z.shape[3] * f:
            raise ValueError(
                f"grayscale {tuple(g.shape[2:])} does not match latent "
                f"{tuple(z.shape[2:])} at f={f}"
            )
        gray_feats = list(reversed(self.gray_features(g)))
        injections = [proj(feat) for proj, feat in zip(self.projections, gray_feats)]
        x, _ = self.autoencoder.decode(z, clamp=clamp, injections=injections)
        return x


class LightnessTrainer:
    """Optimizes the grayscale encoder and projections; the decoder stays frozen."""

    def __init__(
        self,
        lightness: LightnessDecoder,
        disc: Optional[PatchDiscriminator] = None,
        lr: float = 1e-5,
        disc_warmup: int = 0,
        adaptive_every: int = 1,
    ):
        self.lightness = lightness
        self.autoencoder = lightness.autoencoder
        self.autoencoder.requires_grad_(False)
        self.disc = disc if disc is not None else PatchDiscriminator()
        self.perceptual = PerceptualFeatures()
        self.opt_g = torch.optim.AdamW(list(lightness.trainable_parameters()), lr=lr)
        self.opt_d = torch.optim.AdamW(self.disc.parameters(), lr=lr)
        self.disc_warmup = disc_warmup
        self.adaptive_every = max(1, adaptive_every)
        self.lambda_d = 0.0
        self.step_count = 0

    def step(self, batch: torch.Tensor, z_q: Optional[torch.Tensor] = None) -> dict:
        disc_active = self.step_count >= self.disc_warmup
        if z_q is None:
            with torch.no_grad():
                z_q, _, _ = self.autoencoder.quantize(self.autoencoder.encode(batch))
        gray = rgb_batch_to_gray(batch)
        raw = self.lightness.inject_decode(z_q, gray, clamp=False)
        logits_fake = self.disc(raw) if disc_active else None
        comp = reconstruction_loss(batch, raw, logits_fake, self.perceptual)
        rec = comp.l1 + PERCEPTUAL_WEIGHT * comp.lp
        if disc_active and (self.step_count - self.disc_warmup) % self.adaptive_every == 0:
            # The decoder is frozen, so the adaptive-weight gradients are taken
            # at the last trainable projection instead of the decoder output layer.
            self.lambda_d = last_layer_adaptive_weight(
                rec, comp.ld, self.lightness.projections[-1].weight
            )
        lambda_d = self.lambda_d if disc_active else 0.0
        loss = rec + lambda_d * comp.ld
        if not torch.isfinite(loss):
            raise NonFiniteLossError(f"lightness loss is {loss.item()}")
        self.opt_g.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_g.step()

        d_loss = torch.zeros(())
        if disc_active:
            d_loss = hinge_d_loss(self.disc(batch), self.disc(raw.detach()))
            if not torch.isfinite(d_loss):
                raise NonFiniteLossError(f"discriminator loss is {d_loss.item()}")
            self.opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            self.opt_d.step()

        self.step_count += 1
        return {
            "loss": float(loss.detach()),
            "l1": float(comp.l1.detach()),
            "lp": float(comp.lp.detach()),
            "ld": float(comp.ld.detach()),
            "lambda_d": float(lambda_d),
            "d_loss": float(d_loss.detach()),
        }

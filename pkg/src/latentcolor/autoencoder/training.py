"""Alternating generator/discriminator optimization for the autoencoder."""

from typing import Optional

import torch

from ..errors import NonFiniteLossError
from .losses import (
    PERCEPTUAL_WEIGHT,
    PatchDiscriminator,
    PerceptualFeatures,
    hinge_d_loss,
    last_layer_adaptive_weight,
    reconstruction_loss,
)
from .model import Autoencoder

COMMIT_WEIGHT = 1.0
KL_WEIGHT = 1e-6
DISC_WARMUP_STEPS = 500


class AutoencoderTrainer:
    """One generator step (and one discriminator step after warm-up) per call."""

    def __init__(
        self,
        model: Autoencoder,
        disc: Optional[PatchDiscriminator] = None,
        lr: float = 1e-4,
        disc_warmup: int = DISC_WARMUP_STEPS,
        generator: Optional[torch.Generator] = None,
        adaptive_every: int = 1,
    ):
        self.model = model
        self.disc = disc if disc is not None else PatchDiscriminator()
        self.perceptual = PerceptualFeatures()
        self.opt_g = torch.optim.AdamW(model.parameters(), lr=lr)
        self.opt_d = torch.optim.AdamW(self.disc.parameters(), lr=lr)
        self.disc_warmup = disc_warmup
        self.generator = generator
        self.step_count = 0
        # The adaptive weight costs two extra backward passes; it may be
        # refreshed on a cadence instead of every step.
        self.adaptive_every = max(1, adaptive_every)
        self.lambda_d = 0.0

    def _forward(self, batch: torch.Tensor):
        if self.model.config.bottleneck == "kl":
            mean, logvar = self.model.encode_moments(batch)
            logvar = logvar.clamp(-30, 20)
            noise = torch.randn(
                mean.shape, generator=self.generator, dtype=mean.dtype, device=mean.device
            )
            z = mean + torch.exp(0.5 * logvar) * noise
            reg = KL_WEIGHT * 0.5 * torch.mean(mean**2 + logvar.exp() - 1.0 - logvar)
        else:
            z, _, commit = self.model.quantize(self.model.encode(batch))
            reg = COMMIT_WEIGHT * commit
        raw, _ = self.model.decode(z, clamp=False)
        return raw, reg

    def step(self, batch: torch.Tensor) -> dict:
        disc_active = self.step_count >= self.disc_warmup
        raw, reg = self._forward(batch)
        logits_fake = self.disc(raw) if disc_active else None
        comp = reconstruction_loss(batch, raw, logits_fake, self.perceptual)
        rec = comp.l1 + PERCEPTUAL_WEIGHT * comp.lp
        if disc_active and (self.step_count - self.disc_warmup) % self.adaptive_every == 0:
            self.lambda_d = last_layer_adaptive_weight(
                rec, comp.ld, self.model.decoder.conv_out.weight
            )
        lambda_d = self.lambda_d if disc_active else 0.0
        g_loss = rec + lambda_d * comp.ld + reg
        if not torch.isfinite(g_loss):
            raise NonFiniteLossError(f"autoencoder loss is {g_loss.item()}")
        self.opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        self.opt_g.step()

        d_loss = torch.zeros(())
        if disc_active:
            logits_real = self.disc(batch)
            logits_fake = self.disc(raw.detach())
            d_loss = hinge_d_loss(logits_real, logits_fake)
            if not torch.isfinite(d_loss):
                raise NonFiniteLossError(f"discriminator loss is {d_loss.item()}")
            self.opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            self.opt_d.step()

        self.step_count += 1
        return {
            "loss": float(g_loss.detach()),
            "l1": float(comp.l1.detach()),
            "lp": float(comp.lp.detach()),
            "ld": float(comp.ld.detach()),
            "reg": float(reg.detach()),
            "lambda_d": float(lambda_d),
            "d_loss": float(d_loss.detach()),
        }

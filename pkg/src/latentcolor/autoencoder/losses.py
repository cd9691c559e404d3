"""Reconstruction objective: L1 + perceptual + adaptive patch-adversarial terms."""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

PERCEPTUAL_WEIGHT = 0.1
ADAPTIVE_EPS = 1e-4
ADAPTIVE_CLAMP = 1e4
ADAPTIVE_SCALE = 0.8


class PerceptualFeatures(nn.Module):
    """Frozen fixed-seed random conv stack used as a perceptual distance.

    Five stride-2 levels; features are channel-unit-normalized before the
    squared distance, so the measure weights structure over raw magnitude.
    """

    def __init__(self, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = [3, 16, 32, 64, 64, 64]
        self.convs = nn.ModuleList()
        for cin, cout in zip(chans[:-1], chans[1:]):
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            nn.init.kaiming_normal_(conv.weight, generator=gen)
            nn.init.zeros_(conv.bias)
            self.convs.append(conv)
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        out = []
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            out.append(h / (h.pow(2).sum(1, keepdim=True).sqrt() + 1e-8))
        return out

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        dist = x.new_zeros(())
        for fx, fy in zip(self.features(x), self.features(y)):
            dist = dist + torch.mean((fx - fy) ** 2)
        return dist / len(self.convs)


class PatchDiscriminator(nn.Module):
    """Small conv stack producing a logits map over image patches."""

    def __init__(self, base_channels: int = 32):
        super().__init__()
        c = base_channels
        self.net = nn.Sequential(
            nn.Conv2d(3, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1),
            nn.GroupNorm(8, 2 * c),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * c, 4 * c, 4, stride=2, padding=1),
            nn.GroupNorm(8, 4 * c),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * c, 1, 4, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


@dataclass
class LossComponents:
    l1: torch.Tensor
    lp: torch.Tensor
    ld: torch.Tensor

    def total(self, lambda_d: float, lambda_p: float = PERCEPTUAL_WEIGHT) -> torch.Tensor:
        return self.l1 + lambda_p * self.lp + lambda_d * self.ld


def reconstruction_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    disc_logits: Optional[torch.Tensor],
    perceptual: Optional[PerceptualFeatures] = None,
) -> LossComponents:
    """Component losses for a reconstruction: L1, perceptual, hinge generator.

    x_hat is the pre-clamp decoder output. The combined objective is
    L1 + 0.1 * Lp + lambda_d * Ld with lambda_d supplied by the caller.
    """
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    l1 = torch.mean(torch.abs(x - x_hat))
    if perceptual is not None:
        lp = perceptual(x, x_hat)
    else:
        lp = x.new_zeros(())
    if disc_logits is not None:
        ld = -torch.mean(disc_logits)
    else:
        ld = x.new_zeros(())
    return LossComponents(l1=l1, lp=lp, ld=ld)


def adaptive_disc_weight(grad_norm_rec: float, grad_norm_adv: float) -> float:
    """Adversarial weight: 0.8 * clamp(|g_rec| / (|g_adv| + 1e-4), 0, 1e4).

    The norms are of the last decoder layer's parameter gradients under the
    reconstruction and adversarial losses respectively.
    """
    ratio = grad_norm_rec / (grad_norm_adv + ADAPTIVE_EPS)
    return ADAPTIVE_SCALE * min(max(ratio, 0.0), ADAPTIVE_CLAMP)


def hinge_d_loss(logits_real: torch.Tensor, logits_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * (
        torch.mean(F.relu(1.0 - logits_real)) + torch.mean(F.relu(1.0 + logits_fake))
    )


def last_layer_adaptive_weight(
    rec_loss: torch.Tensor, adv_loss: torch.Tensor, last_layer: torch.Tensor
) -> float:
    """Adaptive weight from gradient norms of rec/adv losses at the given parameter."""
    g_rec = torch.autograd.grad(rec_loss, last_layer, retain_graph=True)[0]
    g_adv = torch.autograd.grad(adv_loss, last_layer, retain_graph=True)[0]
    return adaptive_disc_weight(float(g_rec.norm()), float(g_adv.norm()))

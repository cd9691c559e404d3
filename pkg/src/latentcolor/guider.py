"""Trainable guider: a widened replica of the frozen denoiser plus a condition
encoder; its tap features are fused into the base model's taps through 1x1
convolutions so the combined stack predicts noise conditioned on grayscale
structure, color hints, and text."""

import copy
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .autoencoder.model import AutoencoderConfig, Encoder
from .diffusion.schedule import NoiseSchedule, q_sample_batch
from .diffusion.text import TextEmbedding
from .diffusion.unet import Denoiser
from .errors import NonFiniteLossError

DUMMY_CAPTIONS = ("", "color photo", "high quality photo")
CAPTION_DROPOUT_P = 0.5


def caption_dropout(caption: str, rng: np.random.Generator) -> str:
    """With probability 0.5 replace the caption by a random dummy caption."""
    if rng.random() < CAPTION_DROPOUT_P:
        return DUMMY_CAPTIONS[rng.integers(len(DUMMY_CAPTIONS))]
    return caption


class TapFusion(nn.Module):
    """Per-tap fusion: conv1x1(concat(base, conv1x1(guider))).

    The outer convolution starts as [identity | zero] with zero bias, so an
    untrained guider leaves the base features untouched.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.proj = nn.Conv2d(channels, channels, 1)
        self.fuse = nn.Conv2d(2 * channels, channels, 1)
        with torch.no_grad():
            self.fuse.weight.zero_()
            for c in range(channels):
                self.fuse.weight[c, c, 0, 0] = 1.0
            self.fuse.bias.zero_()

    def forward(self, base_feat: torch.Tensor, guider_feat: torch.Tensor) -> torch.Tensor:
        return self.fuse(torch.cat([base_feat, self.proj(guider_feat)], dim=1))


@dataclass
class GuiderConfig:
    cond_channels: int = 16

    def to_dict(self) -> dict:
        return {"cond_channels": self.cond_channels}

    @classmethod
    def from_dict(cls, d: dict) -> "GuiderConfig":
        return cls(**d)


class Guider(nn.Module):
    """U-Net replica + condition encoder + tap fusions over a frozen base denoiser."""

    def __init__(
        self,
        base_config,
        ae_config: AutoencoderConfig,
        config: GuiderConfig = GuiderConfig(),
    ):
        super().__init__()
        self.config = config
        self.base_config = base_config
        widened = replace(
            base_config, in_channels=base_config.in_channels + config.cond_channels
        )
        self.net = Denoiser(widened)
        cond_cfg = replace(ae_config, latent_dim=config.cond_channels, bottleneck="vq")
        self.cond_encoder = Encoder(cond_cfg, in_channels=5)
        self.fusions = nn.ModuleDict(
            {
                name.replace(".", "_"): TapFusion(ch)
                for name, ch in self.net.tap_channels.items()
            }
        )

    def init_from_base(self, base: Denoiser, cond_weight_std: float = 0.02) -> None:
        """Warm start the replica from the frozen base.

        The widened input layer's extra channels get small random weights so
        condition features reach the replica from step 0; step-0 passthrough is
        still exact because the tap fusions start as [identity | zero].
        """
        if base.tap_names != self.net.tap_names:
            raise ValueError(
                f"tap mismatch: base {base.tap_names} vs guider {self.net.tap_names}"
            )
        base_state = base.state_dict()
        own_state = self.net.state_dict()
        with torch.no_grad():
            for name, tensor in base_state.items():
                if name == "conv_in.weight":
                    own_state[name].normal_(0.0, cond_weight_std)
                    own_state[name][:, : tensor.shape[1]].copy_(tensor)
                else:
                    own_state[name].copy_(tensor)

    def init_cond_from_encoder(self, encoder: Encoder) -> None:
        """Warm start E_g from a trained image encoder of the same architecture.

        Input-plane mapping: the gray plane takes the channel-summed RGB kernel,
        the hint RGB planes take the RGB kernels, the mask plane starts at zero.
        The first latent_dim rows of the output projection are copied so the
        condition features begin as an approximate latent estimate.
        """
        with torch.no_grad():
            w = encoder.conv_in.weight
            self.cond_encoder.conv_in.weight.zero_()
            self.cond_encoder.conv_in.weight[:, 0:1].copy_(w.sum(dim=1, keepdim=True))
            self.cond_encoder.conv_in.weight[:, 1:4].copy_(w)
            self.cond_encoder.conv_in.bias.copy_(encoder.conv_in.bias)
            for mine, theirs in zip(self.cond_encoder.blocks, encoder.blocks):
                mine.load_state_dict(theirs.state_dict())
            for mine, theirs in zip(self.cond_encoder.downsamples, encoder.downsamples):
                mine.load_state_dict(theirs.state_dict())
            self.cond_encoder.mid.load_state_dict(encoder.mid.state_dict())
            self.cond_encoder.norm_out.load_state_dict(encoder.norm_out.state_dict())
            n_copy = min(encoder.conv_out.weight.shape[0],
                         self.cond_encoder.conv_out.weight.shape[0])
            self.cond_encoder.conv_out.weight[:n_copy].copy_(encoder.conv_out.weight[:n_copy])
            self.cond_encoder.conv_out.bias[:n_copy].copy_(encoder.conv_out.bias[:n_copy])

    def encode_condition(self, g: torch.Tensor, hint_planes: torch.Tensor) -> torch.Tensor:
        """Encode the 5-plane stack (gray, hint RGB, hint mask) to latent resolution."""
        if g.shape[2:] != hint_planes.shape[2:]:
            raise ValueError(
                f"grayscale {tuple(g.shape[2:])} and hints {tuple(hint_planes.shape[2:])} differ"
            )
        return self.cond_encoder(torch.cat([g, hint_planes], dim=1))

    def guided_predict(
        self,
        base: Denoiser,
        z_t: torch.Tensor,
        t: torch.Tensor,
        text: TextEmbedding,
        g: torch.Tensor,
        hint_planes: torch.Tensor,
    ) -> torch.Tensor:
        """Noise prediction with guider tap features injected into the base taps."""
        if base.tap_names != self.net.tap_names:
            raise ValueError("tap mismatch between guider and base denoiser")
        cond = self.encode_condition(g, hint_planes)
        taps: dict = {}
        self.net(torch.cat([z_t, cond], dim=1), t, text, collect=taps)

        def injector(name: str, feat: torch.Tensor) -> torch.Tensor:
            return self.fusions[name.replace(".", "_")](feat, taps[name])

        return base(z_t, t, text, injector=injector)


class GuiderTrainer:
    """Stage-3 optimization: the guider trains, everything else stays frozen."""

    def __init__(
        self,
        guider: Guider,
        base: Denoiser,
        autoencoder,
        text_encoder,
        sched: NoiseSchedule,
        latent_scale: float = 1.0,
        lr: float = 1e-5,
        fusion_lr_mult: float = 1.0,
    ):
        self.guider = guider
        self.base = base
        self.autoencoder = autoencoder
        self.text_encoder = text_encoder
        self.sched = sched
        self.latent_scale = latent_scale
        for module in (base, autoencoder, text_encoder):
            module.requires_grad_(False)
        fusion_params = list(guider.fusions.parameters())
        fusion_ids = {id(p) for p in fusion_params}
        rest = [p for p in guider.parameters() if id(p) not in fusion_ids]
        # The fusions start at [identity | zero] and must grow O(1) weights
        # before condition features reach the output, so they may train faster.
        self.opt = torch.optim.AdamW(
            [{"params": rest, "lr": lr},
             {"params": fusion_params, "lr": lr * fusion_lr_mult}]
        )
        self.step_count = 0

    def compute_loss(
        self,
        images: Optional[torch.Tensor],
        captions: list[str],
        hint_planes: torch.Tensor,
        torch_gen: Optional[torch.Generator] = None,
        z0: Optional[torch.Tensor] = None,
        g: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        from .lightness import rgb_batch_to_gray

        if z0 is None:
            with torch.no_grad():
                z0, _, _ = self.autoencoder.quantize(self.autoencoder.encode(images))
                z0 = z0 * self.latent_scale
        if g is None:
            g = rgb_batch_to_gray(images)
        batch = z0.shape[0]
        t = torch.randint(1, self.sched.T + 1, (batch,), generator=torch_gen)
        eps = torch.randn(z0.shape, generator=torch_gen, dtype=z0.dtype)
        z_t = q_sample_batch(z0, t, eps, self.sched)
        text = self.text_encoder.embed(captions)
        eps_hat = self.guider.guided_predict(self.base, z_t, t, text, g, hint_planes)
        loss = torch.mean((eps_hat - eps) ** 2)
        if not torch.isfinite(loss):
            raise NonFiniteLossError(f"guider loss is {loss.item()}")
        return loss

    def step(
        self,
        images: Optional[torch.Tensor],
        captions: list[str],
        hint_planes: torch.Tensor,
        torch_gen: Optional[torch.Generator] = None,
        z0: Optional[torch.Tensor] = None,
        g: Optional[torch.Tensor] = None,
    ) -> dict:
        loss = self.compute_loss(images, captions, hint_planes, torch_gen, z0=z0, g=g)
        self.opt.zero_grad(set_to_none=True)
        loss.backward()
        self.opt.step()
        self.step_count += 1
        return {"loss": float(loss.detach())}

from .model import Autoencoder, AutoencoderConfig, Codebook, Decoder, Encoder, quantize_latents
from .losses import (
    PatchDiscriminator,
    PerceptualFeatures,
    adaptive_disc_weight,
    reconstruction_loss,
)
from .training import AutoencoderTrainer

__all__ = [
    "Autoencoder",
    "AutoencoderConfig",
    "Codebook",
    "Decoder",
    "Encoder",
    "quantize_latents",
    "PatchDiscriminator",
    "PerceptualFeatures",
    "adaptive_disc_weight",
    "reconstruction_loss",
    "AutoencoderTrainer",
]

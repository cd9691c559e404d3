"""Latent-diffusion image colorization: a frozen base diffusion model steered by a
trainable guider network, decoded through a lightness-aware autoencoder."""

__version__ = "0.1.0"

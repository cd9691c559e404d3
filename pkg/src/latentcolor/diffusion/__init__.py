from .schedule import NoiseSchedule, make_schedule, q_sample
from .sampling import SamplerOptions, cfg_combine, ddim_sample, ddim_timesteps, sdedit_sample
from .losses import ldm_loss
from .text import TextEmbedding, TextEncoder, Vocabulary
from .unet import Denoiser, DenoiserConfig

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "q_sample",
    "SamplerOptions",
    "cfg_combine",
    "ddim_sample",
    "ddim_timesteps",
    "sdedit_sample",
    "ldm_loss",
    "TextEmbedding",
    "TextEncoder",
    "Vocabulary",
    "Denoiser",
    "DenoiserConfig",
]

"""Denoising training objective."""

from typing import Callable, Optional

import torch

from ..errors import NonFiniteLossError
from .schedule import NoiseSchedule, q_sample_batch


def ldm_loss(
    predict_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
    z0: torch.Tensor,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """MSE between drawn noise and the model estimate at uniform random timesteps.

    predict_fn(z_t, t) takes a batch of noised latents and a (B,) int timestep
    vector; conditioning is closed over by the caller.
    """
    batch = z0.shape[0]
    t = torch.randint(1, sched.T + 1, (batch,), generator=generator, device=z0.device)
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype, device=z0.device)
    z_t = q_sample_batch(z0, t, eps, sched)
    loss = torch.mean((predict_fn(z_t, t) - eps) ** 2)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"diffusion loss is {loss.item()}")
    return loss

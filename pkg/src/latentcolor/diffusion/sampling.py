"""DDIM sampling, classifier-free guidance, and strength-limited img2img."""

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import torch

from .schedule import NoiseSchedule, q_sample

PredictFn = Callable[[torch.Tensor, int], torch.Tensor]


@dataclass
class SamplerOptions:
    """Wire format for sampler settings: {steps, eta, guidance, seed, strength?}."""

    steps: int = 50
    eta: float = 0.0
    guidance: float = 7.5
    seed: int = 0
    strength: Optional[float] = None

    def to_json(self) -> str:
        data = {"steps": self.steps, "eta": self.eta, "guidance": self.guidance,
                "seed": self.seed}
        if self.strength is not None:
            data["strength"] = self.strength
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "SamplerOptions":
        data = json.loads(text)
        allowed = {"steps", "eta", "guidance", "seed", "strength"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown sampler option(s): {sorted(unknown)}")
        return cls(**data)


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Uniformly strided ascending 1-based timesteps, `steps` of them."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps > T:
        raise ValueError(f"steps={steps} exceeds schedule length T={T}")
    stride = T // steps
    return [1 + i * stride for i in range(steps)]


def cfg_combine(
    eps_uncond: torch.Tensor, eps_cond: torch.Tensor, scale: float
) -> torch.Tensor:
    """Classifier-free guidance: uncond + scale * (cond - uncond)."""
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError(
            f"shape mismatch {tuple(eps_uncond.shape)} vs {tuple(eps_cond.shape)}"
        )
    if scale == 1.0:
        return eps_cond
    if scale == 0.0:
        return eps_uncond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def _guided(
    predict_fn: PredictFn,
    uncond_fn: Optional[PredictFn],
    guidance: float,
    z: torch.Tensor,
    t: int,
) -> torch.Tensor:
    if uncond_fn is None or guidance == 1.0:
        return predict_fn(z, t)
    return cfg_combine(uncond_fn(z, t), predict_fn(z, t), guidance)


def _ddim_steps(
    z: torch.Tensor,
    times: Sequence[int],
    predict_fn: PredictFn,
    sched: NoiseSchedule,
    eta: float,
    guidance: float,
    uncond_fn: Optional[PredictFn],
    generator: Optional[torch.Generator],
) -> torch.Tensor:
    """Run the DDIM recursion down an ascending list of timesteps."""
    for i in range(len(times) - 1, -1, -1):
        t = times[i]
        t_prev = times[i - 1] if i > 0 else 0
        abar_t = sched.alpha_bar_at(t)
        abar_prev = sched.alpha_bar_at(t_prev)
        eps_hat = _guided(predict_fn, uncond_fn, guidance, z, t)
        z0_hat = (z - (1.0 - abar_t) ** 0.5 * eps_hat) / abar_t**0.5
        sigma = 0.0
        if eta > 0.0:
            sigma = (
                eta
                * ((1.0 - abar_prev) / (1.0 - abar_t)) ** 0.5
                * (1.0 - abar_t / abar_prev) ** 0.5
            )
        z = abar_prev**0.5 * z0_hat + max(1.0 - abar_prev - sigma**2, 0.0) ** 0.5 * eps_hat
        if sigma > 0.0:
            noise = torch.randn(z.shape, generator=generator, dtype=z.dtype, device=z.device)
            z = z + sigma * noise
    return z


def ddim_sample(
    predict_fn: PredictFn,
    shape: Sequence[int],
    steps: int,
    sched: NoiseSchedule,
    eta: float = 0.0,
    guidance: float = 1.0,
    uncond_fn: Optional[PredictFn] = None,
    seed: Optional[int] = None,
    generator: Optional[torch.Generator] = None,
    x_t: Optional[torch.Tensor] = None,
    dtype: torch.dtype = torch.float32,
    device: str = "cpu",
) -> torch.Tensor:
    """Sample by DDIM from pure noise (or a supplied x_t). Deterministic at eta=0.

    predict_fn(z, t) returns the noise estimate; with uncond_fn given, the two
    predictions are blended by classifier-free guidance at scale `guidance`.
    """
    if eta < 0.0:
        raise ValueError("eta must be >= 0")
    times = ddim_timesteps(sched.T, steps)
    if generator is None:
        generator = torch.Generator(device=device)
        generator.manual_seed(0 if seed is None else int(seed))
    if x_t is None:
        x_t = torch.randn(tuple(shape), generator=generator, dtype=dtype, device=device)
    return _ddim_steps(x_t, times, predict_fn, sched, eta, guidance, uncond_fn, generator)


def sdedit_sample(
    z_init: torch.Tensor,
    strength: float,
    predict_fn: PredictFn,
    steps: int,
    sched: NoiseSchedule,
    eta: float = 0.0,
    guidance: float = 1.0,
    uncond_fn: Optional[PredictFn] = None,
    seed: Optional[int] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Noise z_init to step round(strength * T), then DDIM-denoise from there.

    strength 1 is a full sample from pure noise; strength small enough to keep
    no denoise steps returns z_init unchanged.
    """
    if not (0.0 < strength <= 1.0):
        raise ValueError("strength must lie in (0, 1]")
    if generator is None:
        generator = torch.Generator(device=z_init.device.type)
        generator.manual_seed(0 if seed is None else int(seed))
    t_start = int(round(strength * sched.T))
    if t_start >= sched.T:
        return ddim_sample(
            predict_fn,
            z_init.shape,
            steps,
            sched,
            eta=eta,
            guidance=guidance,
            uncond_fn=uncond_fn,
            generator=generator,
            dtype=z_init.dtype,
            device=z_init.device.type,
        )
    if t_start < 1:
        return z_init
    times = [t for t in ddim_timesteps(sched.T, steps) if t < t_start] + [t_start]
    eps = torch.randn(
        z_init.shape, generator=generator, dtype=z_init.dtype, device=z_init.device
    )
    z = q_sample(z_init, t_start, eps, sched)
    return _ddim_steps(z, times, predict_fn, sched, eta, guidance, uncond_fn, generator)

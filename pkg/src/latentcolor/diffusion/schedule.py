"""Forward-process noise schedule and q(z_t | z_0) sampling."""

from dataclasses import dataclass

import numpy as np
import torch

DEFAULT_T = 1000
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 2e-2


@dataclass
class NoiseSchedule:
    """Linear beta schedule with cached alpha products (float64 tables).

    Timesteps are 1-based: t in {1, ..., T}; tables are indexed t - 1.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def sqrt_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(self.alpha_bar[t - 1]))

    def sqrt_one_minus_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(1.0 - self.alpha_bar[t - 1]))

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar for timestep t, with the t=0 convention alpha_bar=1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])

    def check_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return int(t)


def make_schedule(
    T: int = DEFAULT_T,
    beta_min: float = DEFAULT_BETA_MIN,
    beta_max: float = DEFAULT_BETA_MAX,
) -> NoiseSchedule:
    """Linear beta interpolation over T steps; alpha_bar as running product."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError("betas must satisfy 0 < beta_min <= beta_max < 1")
    beta = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def q_sample(z0: torch.Tensor, t: int, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Forward diffusion: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    t = sched.check_t(t)
    if eps.shape != z0.shape:
        raise ValueError(f"eps shape {tuple(eps.shape)} != z0 shape {tuple(z0.shape)}")
    return sched.sqrt_alpha_bar(t) * z0 + sched.sqrt_one_minus_alpha_bar(t) * eps


def q_sample_batch(
    z0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor, sched: NoiseSchedule
) -> torch.Tensor:
    """q_sample with a per-element integer timestep vector t of shape (B,)."""
    if eps.shape != z0.shape:
        raise ValueError("eps shape must match z0")
    abar = torch.as_tensor(
        sched.alpha_bar[(t - 1).cpu().numpy()], dtype=z0.dtype, device=z0.device
    )
    shape = (-1,) + (1,) * (z0.dim() - 1)
    return abar.sqrt().view(shape) * z0 + (1.0 - abar).sqrt().view(shape) * eps

"""Image quality measures: colorfulness, PSNR, SSIM, and Frechet distance."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from ..imageproc.color import check_rgb, rgb_to_gray

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
FRECHET_EIG_TOL = -1e-6


def colorfulness(img: np.ndarray) -> float:
    """Hasler-Susstrunk colorfulness on the opponent channels, 0..255 scale.

    rg = R - G, yb = (R + G)/2 - B;
    C = sqrt(std_rg^2 + std_yb^2) + 0.3 * sqrt(mean_rg^2 + mean_yb^2).
    """
    img = check_rgb(img) * 255.0
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    std_root = np.sqrt(rg.std() ** 2 + yb.std() ** 2)
    mean_root = np.sqrt(rg.mean() ** 2 + yb.mean() ** 2)
    return float(std_root + 0.3 * mean_root)


def psnr(a: np.ndarray, b: np.ndarray, cap: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB on [0, 1] images, capped for identical pairs."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * np.log10(1.0 / mse), cap)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    xs = np.arange(size) - half
    k = np.exp(-(xs**2) / (2 * sigma**2))
    k = k / k.sum()
    return np.outer(k, k)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) on grayscale."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a, b = rgb_to_gray(np.clip(a, 0, 1)), rgb_to_gray(np.clip(b, 0, 1))
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    def filt(x):
        return convolve(x, kernel, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class FeatureStats:
    """Gaussian fit of a feature-embedding cloud."""

    mean: np.ndarray  # (D,)
    cov: np.ndarray  # (D, D)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("stats need a (D,) mean and (D, D) covariance")


def feature_stats(features: np.ndarray) -> FeatureStats:
    """Mean/covariance of an (N, D) embedding matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need at least 2 feature rows")
    return FeatureStats(features.mean(axis=0), np.cov(features, rowvar=False))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < FRECHET_EIG_TOL:
        raise ValueError(f"matrix square root failed: eigenvalue {vals.min()} below tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(stats_a: FeatureStats, stats_b: FeatureStats) -> float:
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)) via eigendecomposition."""
    if stats_a.mean.shape != stats_b.mean.shape:
        raise ValueError("feature dimensions differ")
    diff = stats_a.mean - stats_b.mean
    sqrt_a = _psd_sqrt(stats_a.cov)
    inner = sqrt_a @ stats_b.cov @ sqrt_a
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < FRECHET_EIG_TOL:
        raise ValueError(f"matrix square root failed: eigenvalue {vals.min()} below tolerance")
    trace_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    return float(diff @ diff + np.trace(stats_a.cov) + np.trace(stats_b.cov) - 2.0 * trace_sqrt)

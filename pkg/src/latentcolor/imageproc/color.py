"""Color-space conversions on float images in [0, 1]."""

import numpy as np

# Rec. 601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def check_rgb(img: np.ndarray) -> np.ndarray:
    """Validate an RGB image array (H, W, 3) with finite values in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def check_gray(img: np.ndarray) -> np.ndarray:
    """Validate a grayscale image array (H, W) with values in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected (H, W) grayscale array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B."""
    img = check_rgb(img)
    return img @ LUMA_WEIGHTS


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """sRGB (D65) to CIELAB. Input in [0, 1], output L in [0, 100], a/b unbounded."""
    img = check_rgb(img)
    srgb = img.astype(np.float64)
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    m = np.array(
        [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ]
    )
    xyz = linear @ m.T
    white = np.array([0.95047, 1.0, 1.08883])
    r = xyz / white
    eps = 216 / 24389
    kappa = 24389 / 27
    f = np.where(r > eps, np.cbrt(r), (kappa * r + 16) / 116)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116 * f[..., 1] - 16
    lab[..., 1] = 500 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200 * (f[..., 1] - f[..., 2])
    return lab


def hue_degrees(rgb: np.ndarray) -> float:
    """Hue angle in [0, 360) of a single RGB triple (HSV convention)."""
    r, g, b = (float(v) for v in np.asarray(rgb, dtype=np.float64))
    mx, mn = max(r, g, b), min(r, g, b)
    d = mx - mn
    if d == 0.0:
        return 0.0
    if mx == r:
        h = ((g - b) / d) % 6.0
    elif mx == g:
        h = (b - r) / d + 2.0
    else:
        h = (r - g) / d + 4.0
    return h * 60.0


def hue_distance_degrees(a: float, b: float) -> float:
    """Circular distance between two hue angles, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)

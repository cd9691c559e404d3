"""Palette quantization of superpixel regions via median-cut over region means."""

from dataclasses import dataclass

import numpy as np

from .color import check_rgb
from .superpixels import SuperpixelLabels


@dataclass
class QuantizedRegionMap:
    """Superpixel partition with one palette color per region."""

    labels: SuperpixelLabels
    region_color: np.ndarray  # (n_segments, 3) in [0, 1]

    def render(self) -> np.ndarray:
        """Flat-color image with every pixel set to its region color."""
        return self.region_color[self.labels.labels]


def region_means(img: np.ndarray, labels: SuperpixelLabels) -> np.ndarray:
    """Mean RGB per region, shape (n_segments, 3)."""
    flat = labels.labels.ravel()
    counts = np.bincount(flat, minlength=labels.n_segments).astype(np.float64)
    means = np.stack(
        [
            np.bincount(flat, weights=img[..., c].ravel(), minlength=labels.n_segments)
            for c in range(3)
        ],
        axis=1,
    )
    return means / counts[:, None]


def median_cut_palette(points: np.ndarray, k: int) -> np.ndarray:
    """Median-cut a point cloud of RGB colors down to at most k palette entries.

    Splitting rules (fixed for determinism): always split the box with the
    widest channel range, along that channel, with the lower half taking
    ceil(n/2) points after a stable sort. Boxes with zero range stop splitting.
    """
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    boxes: list[np.ndarray] = [np.arange(len(points))]
    while len(boxes) < k:
        ranges = []
        for idx in boxes:
            pts = points[idx]
            ranges.append((pts.max(axis=0) - pts.min(axis=0)).max() if len(idx) > 1 else 0.0)
        order = int(np.argmax(ranges))
        if ranges[order] <= 0.0:
            break
        idx = boxes[order]
        pts = points[idx]
        chan = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        sort = idx[np.argsort(pts[:, chan], kind="stable")]
        cut = (len(sort) + 1) // 2
        boxes[order] = sort[:cut]
        boxes.insert(order + 1, sort[cut:])
    return np.stack([points[idx].mean(axis=0) for idx in boxes])


def quantize_colors(img: np.ndarray, labels: SuperpixelLabels, k: int) -> QuantizedRegionMap:
    """Snap each region's mean color to the nearest of k median-cut palette colors."""
    img = check_rgb(img)
    if img.shape[:2] != labels.labels.shape:
        raise ValueError(
            f"labels shape {labels.labels.shape} does not match image {img.shape[:2]}"
        )
    means = region_means(img, labels)
    palette = median_cut_palette(means, k)
    d2 = ((means[:, None, :] - palette[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
    colors = np.clip(palette[nearest], 0.0, 1.0)
    return QuantizedRegionMap(labels, colors)

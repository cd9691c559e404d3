"""Color hint maps: simulated training hints and user-placed hint points."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .quantize import QuantizedRegionMap

DEFAULT_HINT_RADIUS = 3
HINT_FRACTION_RANGE = (0.3, 0.5)


@dataclass
class HintMap:
    """Sparse per-pixel color hints plus a binary validity mask."""

    hint_rgb: np.ndarray  # (H, W, 3) float32 in [0, 1], zero where mask is zero
    mask: np.ndarray  # (H, W) float32 in {0, 1}

    def __post_init__(self):
        self.hint_rgb = np.asarray(self.hint_rgb, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=np.float32)
        if self.hint_rgb.shape[:2] != self.mask.shape or self.hint_rgb.shape[2:] != (3,):
            raise ValueError("hint_rgb must be (H, W, 3) matching mask (H, W)")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ValueError("mask must be binary")
        if np.any(self.hint_rgb[self.mask == 0.0] != 0.0):
            raise ValueError("hint_rgb must be zero wherever mask is zero")
        if self.hint_rgb.min() < 0.0 or self.hint_rgb.max() > 1.0:
            raise ValueError("hint colors must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @classmethod
    def empty(cls, height: int, width: int) -> "HintMap":
        return cls(
            np.zeros((height, width, 3), dtype=np.float32),
            np.zeros((height, width), dtype=np.float32),
        )

    def planes(self) -> np.ndarray:
        """4-plane stack (H, W, 4): hint RGB followed by the mask."""
        return np.concatenate([self.hint_rgb, self.mask[..., None]], axis=2)


@dataclass
class HintPoint:
    x: int
    y: int
    rgb: tuple[float, float, float]
    radius: int = field(default=DEFAULT_HINT_RADIUS)


def _hint_count(n_segments: int, fraction: float) -> int:
    # Round half up, then clamp so the hinted share itself stays in [0.3, 0.5]
    # (plain rounding can dip just below 30% for some segment counts).
    count = int(math.floor(fraction * n_segments + 0.5))
    low = min(n_segments, max(1, math.ceil(HINT_FRACTION_RANGE[0] * n_segments)))
    high = max(low, int(math.floor(HINT_FRACTION_RANGE[1] * n_segments)))
    return min(max(count, low), high)


def sample_hint_map(qmap: QuantizedRegionMap, fraction: float, rng_seed) -> HintMap:
    """Fill a uniformly random subset of regions with their quantized color.

    fraction must lie in [0.3, 0.5]; the number of hinted regions is the
    rounded fraction of the region count. Deterministic given rng_seed.
    """
    lo, hi = HINT_FRACTION_RANGE
    if not (lo <= fraction <= hi):
        raise ValueError(f"fraction must lie in [{lo}, {hi}], got {fraction}")
    rng = np.random.default_rng(rng_seed)
    n = qmap.labels.n_segments
    chosen = rng.choice(n, size=_hint_count(n, fraction), replace=False)
    hinted = np.isin(qmap.labels.labels, chosen)
    mask = hinted.astype(np.float32)
    rgb = np.where(hinted[..., None], qmap.region_color[qmap.labels.labels], 0.0)
    return HintMap(rgb.astype(np.float32), mask)


def hints_from_user_points(
    points: list[HintPoint], radius: int, width: int, height: int
) -> HintMap:
    """Splat user hint points as filled discs; later points overwrite earlier ones."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    rgb = np.zeros((height, width, 3), dtype=np.float32)
    mask = np.zeros((height, width), dtype=np.float32)
    for i, p in enumerate(points):
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise ValueError(f"hint point {i} at ({p.x}, {p.y}) is outside {width}x{height}")
        r = p.radius if p.radius else radius
        y0, y1 = max(0, p.y - r), min(height, p.y + r + 1)
        x0, x1 = max(0, p.x - r), min(width, p.x + r + 1)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        disc = (ys - p.y) ** 2 + (xs - p.x) ** 2 <= r * r
        mask[y0:y1, x0:x1][disc] = 1.0
        for c in range(3):
            rgb[y0:y1, x0:x1, c][disc] = p.rgb[c]
    return HintMap(rgb, mask)


def hint_points_to_json(points: list[HintPoint]) -> str:
    return json.dumps(
        [{"x": p.x, "y": p.y, "r": p.rgb[0], "g": p.rgb[1], "b": p.rgb[2]} for p in points]
    )


def hint_points_from_json(text: str) -> list[HintPoint]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("hint JSON must be a list of {x, y, r, g, b} objects")
    points = []
    for i, item in enumerate(data):
        try:
            points.append(
                HintPoint(
                    x=int(item["x"]),
                    y=int(item["y"]),
                    rgb=(float(item["r"]), float(item["g"]), float(item["b"])),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"hint entry {i} is malformed: {exc}") from exc
    return points


def hint_map_from_json(text: str, width: int, height: int, radius: int = DEFAULT_HINT_RADIUS) -> HintMap:
    return hints_from_user_points(hint_points_from_json(text), radius, width, height)


def hint_map_to_png(hm: HintMap, path) -> None:
    """Write the hint map as an RGBA PNG (alpha channel carries the mask)."""
    from .pngio import save_png

    save_png(path, hm.planes())


def hint_map_from_png(path) -> HintMap:
    from .pngio import load_png

    planes = load_png(path, mode="RGBA")
    mask = (planes[..., 3] > 0.5).astype(np.float32)
    rgb = planes[..., :3] * mask[..., None]
    return HintMap(rgb.astype(np.float32), mask)

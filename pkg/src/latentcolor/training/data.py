"""Dataset ingestion and the procedural toy dataset (colored shapes on gradients)."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from ..imageproc.pngio import save_png

# Two hues per Rec. 601 luma band (~0.26, 0.42, 0.59, 0.76): the grayscale
# plane narrows a shape's color to a pair, and hints or the caption decide the
# rest, which keeps hint/text conditioning informative rather than redundant.
PALETTE = {
    "red": (0.75, 0.06, 0.05),
    "blue": (0.10, 0.20, 0.95),
    "green": (0.10, 0.65, 0.12),
    "purple": (0.62, 0.22, 0.90),
    "orange": (0.95, 0.52, 0.06),
    "cyan": (0.08, 0.78, 0.90),
    "yellow": (0.92, 0.78, 0.10),
    "pink": (0.98, 0.67, 0.85),
}
SHAPE_TYPES = ("circle", "square", "triangle")
MANIFEST_NAME = "captions.tsv"
SCENES_NAME = "scenes.json"


@dataclass
class CaptionedDataset:
    """Image paths with captions; iteration order is seeded and deterministic."""

    root: Path
    entries: list  # [(Path, caption)]
    scenes: Optional[list] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def caption(self, i: int) -> str:
        return self.entries[i][1]

    def load_image(self, i: int, resolution: int) -> np.ndarray:
        """Float RGB in [0, 1], center-cropped square and resized to resolution."""
        path = self.entries[i][0]
        with Image.open(path) as im:
            im = im.convert("RGB")
            w, h = im.size
            side = min(w, h)
            left, top = (w - side) // 2, (h - side) // 2
            im = im.crop((left, top, left + side, top + side))
            if side != resolution:
                im = im.resize((resolution, resolution), Image.BILINEAR)
            return np.asarray(im, dtype=np.float32) / 255.0

    def load_batch(self, indices, resolution: int) -> torch.Tensor:
        imgs = [self.load_image(int(i), resolution) for i in indices]
        return torch.from_numpy(np.stack(imgs)).permute(0, 3, 1, 2).contiguous()

    def epoch_order(self, seed: int, epoch: int) -> np.ndarray:
        rng = np.random.default_rng((seed + 1) * 1_000_003 + epoch)
        return rng.permutation(len(self.entries))

    def batch_indices(self, seed: int, step: int, batch_size: int) -> np.ndarray:
        """Indices of global batch `step` under seeded per-epoch shuffling."""
        per_epoch = max(1, len(self.entries) // batch_size)
        epoch, slot = divmod(step, per_epoch)
        order = self.epoch_order(seed, epoch)
        return order[slot * batch_size : (slot + 1) * batch_size]


def ingest_dataset(path) -> CaptionedDataset:
    """Validate a dataset directory: a caption manifest plus readable images."""
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"dataset path does not exist: {root}")
    manifest = root / MANIFEST_NAME
    entries = []
    if manifest.exists():
        for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            rel = parts[0].strip()
            caption = parts[1].strip() if len(parts) > 1 else ""
            if not rel:
                raise ValueError(f"{manifest}:{lineno}: empty image path")
            img_path = root / rel
            if not img_path.exists():
                raise FileNotFoundError(f"{manifest}:{lineno}: missing image {img_path}")
            try:
                with Image.open(img_path) as im:
                    im.verify()
            except Exception as exc:
                raise ValueError(f"{manifest}:{lineno}: unreadable image {img_path}: {exc}")
            entries.append((img_path, caption))
    else:
        for img_path in sorted(root.glob("**/*.png")) + sorted(root.glob("**/*.jpg")):
            entries.append((img_path, ""))
    if not entries:
        raise ValueError(f"no images found in {root}")
    scenes = None
    scenes_path = root / SCENES_NAME
    if scenes_path.exists():
        scenes = json.loads(scenes_path.read_text())
    return CaptionedDataset(root=root, entries=entries, scenes=scenes)


PALETTE_HUE_ORDER = list(PALETTE)
MOSAIC_CELL = 8


def _palette_hue_angles() -> np.ndarray:
    from ..imageproc.color import hue_degrees

    return np.asarray([hue_degrees(np.asarray(PALETTE[n])) for n in PALETTE_HUE_ORDER])


def _shape_mask(kind: str, cx: float, cy: float, size: float, res: int) -> np.ndarray:
    ys, xs = np.mgrid[0:res, 0:res] + 0.5
    if kind == "circle":
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= size**2
    if kind == "square":
        return (np.abs(xs - cx) <= size) & (np.abs(ys - cy) <= size)
    if kind == "triangle":
        # Upward triangle: inside the three half-planes.
        top = ys >= cy - size
        left = (ys - (cy + size)) <= 1.8 * (xs - (cx - size))
        right = (ys - (cy + size)) <= -1.8 * (xs - (cx + size))
        return top & left & right & (ys <= cy + size)
    raise ValueError(f"unknown shape kind {kind}")


def render_toy_scene(scene: dict, resolution: int) -> np.ndarray:
    """Render a scene description at 2x supersampling, averaged down.

    The background is a luma gradient overlaid with a cell mosaic whose hue
    follows a smooth random field: luma comes from the gradient alone, chroma
    from the palette hue nearest the local field angle. Hue is therefore not
    readable from the grayscale plane but propagates from sparse color hints.
    """
    res2 = resolution * 2
    bg = scene["background"]
    ys, xs = np.mgrid[0:res2, 0:res2] / (res2 - 1)
    axis = {"h": xs, "v": ys, "d": (xs + ys) / 2}[bg["axis"]]
    luma = bg["low"] + (bg["high"] - bg["low"]) * axis
    img = luma[..., None] * np.ones(3)

    mosaic = bg["mosaic"]
    cell2 = MOSAIC_CELL * 2
    angles = _palette_hue_angles()
    palette_rgb = np.asarray([PALETTE[n] for n in PALETTE_HUE_ORDER])
    from ..imageproc.color import LUMA_WEIGHTS

    palette_luma = palette_rgb @ LUMA_WEIGHTS
    chroma_vec = palette_rgb - palette_luma[:, None]
    for cy in range(0, res2, cell2):
        for cx in range(0, res2, cell2):
            fx, fy = (cx + cell2 / 2) / res2, (cy + cell2 / 2) / res2
            theta = (mosaic["theta0"] + mosaic["kx"] * fx + mosaic["ky"] * fy) % 360.0
            dist = np.abs((angles - theta + 180.0) % 360.0 - 180.0)
            hue_i = int(np.argmin(dist))
            img[cy : cy + cell2, cx : cx + cell2] += mosaic["sat"] * chroma_vec[hue_i]
    img = np.clip(img, 0.0, 1.0)

    for shape in scene["shapes"]:
        mask = _shape_mask(
            shape["type"], shape["cx"] * 2, shape["cy"] * 2, shape["size"] * 2, res2
        )
        img[mask] = np.asarray(shape["rgb"])
    # 2x2 average pool down to target resolution.
    img = img.reshape(resolution, 2, resolution, 2, 3).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _sample_scene(rng: np.random.Generator, resolution: int) -> dict:
    # Luma kept away from the extremes so cell chroma rarely clips.
    low, high = sorted(rng.uniform(0.2, 0.85, size=2).tolist())
    if high - low < 0.15:
        high = min(0.85, low + 0.15)
    background = {
        "axis": ("h", "v", "d")[rng.integers(3)],
        "low": low,
        "high": high,
        "mosaic": {
            "theta0": float(rng.uniform(0.0, 360.0)),
            "kx": float(rng.uniform(-540.0, 540.0)),
            "ky": float(rng.uniform(-540.0, 540.0)),
            "sat": float(rng.uniform(0.45, 0.65)),
        },
    }
    n_shapes = 1 + int(rng.random() < 0.5)
    shapes = []
    color_names = list(PALETTE)
    chosen = rng.choice(len(color_names), size=n_shapes, replace=False)
    for k in range(n_shapes):
        name = color_names[chosen[k]]
        base = np.asarray(PALETTE[name])
        # Jitter kept below the luma-band separation.
        rgb = np.clip(base * rng.uniform(0.94, 1.04) + rng.uniform(-0.02, 0.02, 3), 0.0, 1.0)
        size = rng.uniform(resolution / 6.5, resolution / 3.8)
        if n_shapes == 1:
            cx = rng.uniform(size + 2, resolution - size - 2)
        else:
            half = resolution / 2
            lo = k * half + size * 0.7
            hi = (k + 1) * half - size * 0.7
            cx = rng.uniform(min(lo, hi), max(lo, hi))
        cy = rng.uniform(size + 2, resolution - size - 2)
        shapes.append(
            {
                "type": SHAPE_TYPES[rng.integers(len(SHAPE_TYPES))],
                "color": name,
                "rgb": rgb.tolist(),
                "cx": float(cx),
                "cy": float(cy),
                "size": float(size),
            }
        )
    caption = " and ".join(f"a {s['color']} {s['type']}" for s in shapes)
    return {"background": background, "shapes": shapes, "caption": caption}


def generate_toy_dataset(out_dir, n: int, resolution: int = 64, seed: int = 0) -> CaptionedDataset:
    """Write n rendered shape scenes with captions and scene metadata, then ingest."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    scenes = []
    for i in range(n):
        scene = _sample_scene(rng, resolution)
        img = render_toy_scene(scene, resolution)
        rel = f"images/{i:05d}.png"
        save_png(out / rel, img)
        lines.append(f"{rel}\t{scene['caption']}")
        scene["file"] = rel
        scenes.append(scene)
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    (out / SCENES_NAME).write_text(json.dumps(scenes))
    return ingest_dataset(out)

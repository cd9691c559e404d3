"""8-bit PNG I/O for float images in [0, 1]."""

from pathlib import Path

import numpy as np
from PIL import Image


def load_png(path, mode: str = "RGB") -> np.ndarray:
    """Load a PNG as a float32 array in [0, 1]; (H, W, C) or (H, W) for mode 'L'."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert(mode), dtype=np.float32) / 255.0
    return arr


def save_png(path, img: np.ndarray) -> None:
    """Save a float image in [0, 1] as an 8-bit PNG ((H, W), (H, W, 3) or (H, W, 4))."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(img)
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        Image.fromarray(data, mode="L").save(path)
    elif data.ndim == 3 and data.shape[2] == 3:
        Image.fromarray(data, mode="RGB").save(path)
    elif data.ndim == 3 and data.shape[2] == 4:
        Image.fromarray(data, mode="RGBA").save(path)
    else:
        raise ValueError(f"unsupported image shape {arr.shape}")

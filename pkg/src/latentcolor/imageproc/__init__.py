from .color import rgb_to_gray, rgb_to_lab, hue_degrees
from .superpixels import SuperpixelLabels, slic_superpixels
from .quantize import QuantizedRegionMap, median_cut_palette, quantize_colors
from .hints import (
    HintMap,
    HintPoint,
    hints_from_user_points,
    sample_hint_map,
    hint_map_from_json,
    hint_map_to_png,
    hint_map_from_png,
    hint_points_to_json,
    hint_points_from_json,
)
from .pngio import load_png, save_png

__all__ = [
    "rgb_to_gray",
    "rgb_to_lab",
    "hue_degrees",
    "SuperpixelLabels",
    "slic_superpixels",
    "QuantizedRegionMap",
    "median_cut_palette",
    "quantize_colors",
    "HintMap",
    "HintPoint",
    "hints_from_user_points",
    "sample_hint_map",
    "hint_map_from_json",
    "hint_map_to_png",
    "hint_map_from_png",
    "hint_points_to_json",
    "hint_points_from_json",
    "load_png",
    "save_png",
]

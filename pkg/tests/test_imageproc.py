import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentcolor.imageproc import (
    HintMap,
    HintPoint,
    hint_map_from_json,
    hint_map_from_png,
    hint_map_to_png,
    hint_points_from_json,
    hint_points_to_json,
    hints_from_user_points,
    median_cut_palette,
    quantize_colors,
    rgb_to_gray,
    sample_hint_map,
    slic_superpixels,
)
from latentcolor.imageproc.superpixels import SuperpixelLabels


def test_gray_white_black():
    white = np.ones((4, 4, 3))
    black = np.zeros((4, 4, 3))
    assert np.allclose(rgb_to_gray(white), 1.0)
    assert np.allclose(rgb_to_gray(black), 0.0)


def test_gray_pure_red():
    red = np.zeros((3, 5, 3))
    red[..., 0] = 1.0
    assert np.allclose(rgb_to_gray(red), 0.299)


def test_gray_rejects_bad_input():
    with pytest.raises(ValueError):
        rgb_to_gray(np.ones((4, 4)))
    with pytest.raises(ValueError):
        rgb_to_gray(np.full((4, 4, 3), 1.5))


@given(
    r=st.floats(0, 1), g=st.floats(0, 1), b=st.floats(0, 1), delta=st.floats(0, 1)
)
@settings(max_examples=50, deadline=None)
def test_gray_monotone_and_bounded(r, g, b, delta):
    base = np.array([[[r, g, b]]])
    y = rgb_to_gray(base)[0, 0]
    assert 0.0 <= y <= 1.0
    for c in range(3):
        bumped = base.copy()
        bumped[0, 0, c] = min(1.0, bumped[0, 0, c] + delta)
        assert rgb_to_gray(bumped)[0, 0] >= y - 1e-12


def _assert_connected_partition(sp: SuperpixelLabels):
    from collections import deque

    labels = sp.labels
    seen_labels = np.unique(labels)
    assert seen_labels.min() == 0 and seen_labels.max() == sp.n_segments - 1
    assert len(seen_labels) == sp.n_segments
    for lab in seen_labels:
        ys, xs = np.nonzero(labels == lab)
        cells = set(zip(ys.tolist(), xs.tolist()))
        frontier = deque([(ys[0], xs[0])])
        reached = {(ys[0], xs[0])}
        while frontier:
            y, x = frontier.popleft()
            for p in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if p in cells and p not in reached:
                    reached.add(p)
                    frontier.append(p)
        assert len(reached) == len(cells), f"label {lab} is disconnected"


def test_slic_single_segment():
    img = np.random.default_rng(0).random((32, 32, 3))
    sp = slic_superpixels(img, 1)
    assert sp.n_segments == 1
    assert (sp.labels == 0).all()


def test_slic_constant_image_tiles_grid():
    # 64x64 constant image, 16 segments: near-square ~256 px regions.
    img = np.full((64, 64, 3), 0.5)
    sp = slic_superpixels(img, 16)
    assert sp.n_segments == 16
    sizes = sp.region_sizes()
    assert sizes.sum() == 64 * 64
    assert sizes.min() >= 128 and sizes.max() <= 512  # within 2x of 256
    _assert_connected_partition(sp)


@pytest.mark.parametrize("axis", [0, 1])
def test_slic_two_flat_halves(axis):
    img = np.zeros((64, 64, 3))
    if axis == 0:
        img[32:, :] = 1.0
    else:
        img[:, 32:] = 1.0
    sp = slic_superpixels(img, 2)
    assert sp.n_segments == 2
    # Exhaustive comparison against the known boundary, 1 px slack.
    truth = np.zeros((64, 64), dtype=int)
    if axis == 0:
        truth[32:, :] = 1
    else:
        truth[:, 32:] = 1
    match = sp.labels == truth
    flipped = sp.labels == (1 - truth)
    agreement = max(match.mean(), flipped.mean())
    assert agreement >= 1.0 - (64 / (64 * 64))  # at most one boundary row/col wrong


def test_slic_rejects_oversubscription():
    with pytest.raises(ValueError):
        slic_superpixels(np.full((4, 4, 3), 0.5), 17)


def test_slic_deterministic():
    img = np.random.default_rng(1).random((48, 48, 3))
    a = slic_superpixels(img, 24)
    b = slic_superpixels(img, 24)
    assert np.array_equal(a.labels, b.labels)


@given(seed=st.integers(0, 2**16), n=st.sampled_from([4, 9, 25]))
@settings(max_examples=10, deadline=None)
def test_slic_connected_partition_property(seed, n):
    rng = np.random.default_rng(seed)
    # Smooth random image: blurred noise.
    base = rng.random((6, 6, 3))
    img = np.clip(np.kron(base, np.ones((8, 8, 1))), 0, 1)
    sp = slic_superpixels(img, n)
    _assert_connected_partition(sp)


def test_quantize_constant_image():
    img = np.full((32, 32, 3), 0.25)
    sp = slic_superpixels(img, 4)
    qmap = quantize_colors(img, sp, 8)
    assert np.allclose(qmap.region_color, 0.25)


def test_quantize_two_region_red_blue():
    img = np.zeros((32, 32, 3))
    img[:, :16, 0] = 1.0
    img[:, 16:, 2] = 1.0
    sp = slic_superpixels(img, 2)
    qmap = quantize_colors(img, sp, 2)
    colors = {tuple(np.round(c, 6)) for c in qmap.region_color}
    assert colors == {(1.0, 0.0, 0.0), (0.0, 0.0, 1.0)}


def _median_cut_oracle(points, k):
    """Straight-line median cut over a handful of points (test oracle)."""
    points = np.asarray(points, dtype=np.float64)
    boxes = [list(range(len(points)))]
    while len(boxes) < k:
        spans = []
        for idx in boxes:
            pts = points[idx]
            spans.append(float((pts.max(0) - pts.min(0)).max()) if len(idx) > 1 else 0.0)
        pick = spans.index(max(spans))
        if spans[pick] <= 0:
            break
        idx = boxes[pick]
        pts = points[idx]
        chan = int(np.argmax(pts.max(0) - pts.min(0)))
        srt = [idx[j] for j in np.argsort(pts[:, chan], kind="stable")]
        cut = (len(srt) + 1) // 2
        boxes[pick] = srt[:cut]
        boxes.insert(pick + 1, srt[cut:])
    return np.stack([points[idx].mean(axis=0) for idx in boxes])


def test_median_cut_matches_oracle_on_eight_points():
    rng = np.random.default_rng(7)
    means = rng.random((8, 3))
    got = median_cut_palette(means, 4)
    want = _median_cut_oracle(means, 4)
    assert np.allclose(got, want)


def test_quantize_eight_regions_known_means():
    # 8 vertical stripes of known colors on a 32x64 canvas.
    rng = np.random.default_rng(3)
    stripe_colors = rng.random((8, 3))
    img = np.zeros((32, 64, 3))
    labels = np.zeros((32, 64), dtype=np.int32)
    for i in range(8):
        img[:, i * 8 : (i + 1) * 8] = stripe_colors[i]
        labels[:, i * 8 : (i + 1) * 8] = i
    sp = SuperpixelLabels(labels, 8)
    qmap = quantize_colors(img, sp, 4)
    palette = _median_cut_oracle(stripe_colors, 4)
    d2 = ((stripe_colors[:, None] - palette[None]) ** 2).sum(-1)
    want = palette[np.argmin(d2, axis=1)]
    assert np.allclose(qmap.region_color, np.clip(want, 0, 1), atol=1e-9)


def test_quantize_rejects_mismatched_dims():
    img = np.full((16, 16, 3), 0.5)
    sp = slic_superpixels(np.full((8, 8, 3), 0.5), 2)
    with pytest.raises(ValueError):
        quantize_colors(img, sp, 2)


def _toy_qmap(n_regions=10, seed=0):
    rng = np.random.default_rng(seed)
    side = 40
    labels = np.repeat(np.arange(n_regions), side * side // n_regions).reshape(side, side)
    sp = SuperpixelLabels(labels.astype(np.int32), n_regions)
    from latentcolor.imageproc.quantize import QuantizedRegionMap

    return QuantizedRegionMap(sp, rng.random((n_regions, 3)))


def test_sample_hint_map_count():
    qmap = _toy_qmap(10)
    hm = sample_hint_map(qmap, 0.3, rng_seed=5)
    hinted = len(np.unique(qmap.labels.labels[hm.mask == 1.0]))
    assert hinted == 3


def test_sample_hint_map_deterministic():
    qmap = _toy_qmap(10)
    a = sample_hint_map(qmap, 0.42, rng_seed=11)
    b = sample_hint_map(qmap, 0.42, rng_seed=11)
    assert np.array_equal(a.mask, b.mask)
    assert np.array_equal(a.hint_rgb, b.hint_rgb)


def test_sample_hint_map_rejects_fraction():
    qmap = _toy_qmap(10)
    for bad in (0.29, 0.51, -1.0):
        with pytest.raises(ValueError):
            sample_hint_map(qmap, bad, rng_seed=0)


def test_sample_hint_map_mean_share():
    # Monte-Carlo oracle: fraction ~ U[0.3, 0.5] has mean 0.4.
    qmap = _toy_qmap(64, seed=2)
    rng = np.random.default_rng(123)
    shares = []
    for i in range(1000):
        frac = rng.uniform(0.3, 0.5)
        hm = sample_hint_map(qmap, frac, rng_seed=i)
        share = len(np.unique(qmap.labels.labels[hm.mask == 1.0])) / 64
        assert 0.30 <= share <= 0.50
        shares.append(share)
    assert 0.38 <= float(np.mean(shares)) <= 0.42


def test_hint_map_invariant_enforced():
    rgb = np.zeros((4, 4, 3), dtype=np.float32)
    mask = np.zeros((4, 4), dtype=np.float32)
    rgb[0, 0] = 0.5  # color without mask
    with pytest.raises(ValueError):
        HintMap(rgb, mask)


def test_user_points_empty():
    hm = hints_from_user_points([], radius=3, width=16, height=16)
    assert hm.mask.sum() == 0
    assert hm.hint_rgb.sum() == 0


def test_user_points_disc_at_origin():
    hm = hints_from_user_points(
        [HintPoint(0, 0, (1.0, 0.0, 0.0), radius=1)], radius=1, width=8, height=8
    )
    want = {(0, 0), (0, 1), (1, 0)}
    got = set(zip(*np.nonzero(hm.mask)))
    assert got == {(y, x) for (y, x) in want}


def test_user_points_overwrite():
    pts = [
        HintPoint(4, 4, (1.0, 0.0, 0.0), radius=2),
        HintPoint(5, 4, (0.0, 0.0, 1.0), radius=2),
    ]
    hm = hints_from_user_points(pts, radius=2, width=16, height=16)
    assert tuple(hm.hint_rgb[4, 5]) == (0.0, 0.0, 1.0)
    assert tuple(hm.hint_rgb[4, 2]) == (1.0, 0.0, 0.0)


def test_user_points_out_of_bounds():
    with pytest.raises(ValueError):
        hints_from_user_points([HintPoint(20, 0, (1, 0, 0))], radius=1, width=16, height=16)


def test_hint_json_roundtrip():
    pts = [HintPoint(1, 2, (1.0, 0.5, 0.0)), HintPoint(3, 4, (0.0, 0.0, 1.0))]
    text = hint_points_to_json(pts)
    back = hint_points_from_json(text)
    assert [(p.x, p.y, p.rgb) for p in back] == [(p.x, p.y, p.rgb) for p in pts]
    parsed = json.loads(text)
    assert set(parsed[0]) == {"x", "y", "r", "g", "b"}


def test_hint_map_png_roundtrip(tmp_path):
    hm = hints_from_user_points(
        [HintPoint(5, 5, (1.0, 0.0, 0.0), radius=2)], radius=2, width=16, height=16
    )
    path = tmp_path / "hints.png"
    hint_map_to_png(hm, path)
    back = hint_map_from_png(path)
    assert np.array_equal(back.mask, hm.mask)
    assert np.allclose(back.hint_rgb, hm.hint_rgb, atol=1 / 255)


def test_hint_map_from_json_builds_map():
    text = json.dumps([{"x": 2, "y": 2, "r": 0.0, "g": 1.0, "b": 0.0}])
    hm = hint_map_from_json(text, width=8, height=8, radius=1)
    assert hm.mask[2, 2] == 1.0
    assert tuple(hm.hint_rgb[2, 2]) == (0.0, 1.0, 0.0)

import numpy as np
import pytest

from latentcolor.errors import CheckpointError
from latentcolor.imageproc.hints import HintPoint
from latentcolor.pipeline import (
    ColorizationRequest,
    Colorizer,
    ModelBundle,
    gray_consistency,
    pad_to_multiple,
)


@pytest.fixture(scope="module")
def colorizer(micro_run_dir):
    return Colorizer(ModelBundle.load(micro_run_dir))


def _gray(h=32, w=32):
    return np.clip(np.linspace(0.2, 0.8, w)[None, :] * np.ones((h, w)), 0.0, 1.0)


def test_request_validation():
    with pytest.raises(ValueError):
        ColorizationRequest(gray=_gray(), variants=0)
    with pytest.raises(ValueError):
        ColorizationRequest(gray=_gray(), steps=0)
    with pytest.raises(ValueError):
        ColorizationRequest(gray=np.full((8, 8), 2.0))


def test_seed_determinism_end_to_end(colorizer):
    req = dict(gray=_gray(), caption="a red circle", steps=6, seed=11, variants=1)
    a = colorizer.colorize(ColorizationRequest(**req))
    b = colorizer.colorize(ColorizationRequest(**req))
    assert np.array_equal(a.images[0], b.images[0])
    assert a.seeds == b.seeds


def test_variants_are_distinct_with_recorded_seeds(colorizer):
    res = colorizer.colorize(ColorizationRequest(gray=_gray(), steps=6, seed=3, variants=3))
    assert len(res.images) == 3
    assert res.seeds == [3, 4, 5]
    assert not np.array_equal(res.images[0], res.images[1])
    assert not np.array_equal(res.images[1], res.images[2])


def test_output_shape_matches_input(colorizer):
    for h, w in ((32, 32), (33, 37), (40, 36)):
        res = colorizer.colorize(ColorizationRequest(gray=_gray(h, w), steps=4))
        assert res.images[0].shape == (h, w, 3)


def test_minimum_side_enforced(colorizer):
    with pytest.raises(ValueError, match="upscale"):
        colorizer.colorize(ColorizationRequest(gray=np.full((16, 16), 0.5), steps=4))


def test_empty_points_equal_plain_colorize(colorizer):
    base = colorizer.colorize(ColorizationRequest(gray=_gray(), steps=5, seed=4))
    via_hints = colorizer.colorize_with_hints(
        ColorizationRequest(gray=_gray(), points=[], steps=5, seed=4)
    )
    assert np.array_equal(base.images[0], via_hints.images[0])


def test_hint_out_of_bounds(colorizer):
    with pytest.raises(ValueError):
        colorizer.colorize_with_hints(
            ColorizationRequest(gray=_gray(), points=[HintPoint(64, 2, (1, 0, 0))], steps=4)
        )


def test_hint_changes_output(colorizer):
    plain = colorizer.colorize(ColorizationRequest(gray=_gray(), steps=5, seed=4))
    hinted = colorizer.colorize_with_hints(
        ColorizationRequest(
            gray=_gray(), points=[HintPoint(16, 16, (1.0, 0.0, 0.0))], steps=5, seed=4
        )
    )
    assert not np.array_equal(plain.images[0], hinted.images[0])


def test_sdedit_baseline_runs_and_is_deterministic(colorizer):
    req = dict(gray=_gray(), steps=6, seed=9)
    a = colorizer.colorize_sdedit_baseline(ColorizationRequest(**req))
    b = colorizer.colorize_sdedit_baseline(ColorizationRequest(**req))
    assert np.array_equal(a.images[0], b.images[0])
    assert a.images[0].shape == (32, 32, 3)


def test_result_carries_hashes_and_latents(colorizer):
    res = colorizer.colorize(ColorizationRequest(gray=_gray(), steps=4))
    assert set(res.model_hashes) == {
        "autoencoder", "denoiser", "text_encoder", "guider", "lightness",
    }
    assert res.latents[0].shape == (8, 8, 3)


def test_pad_to_multiple():
    arr = np.arange(15, dtype=float).reshape(3, 5)
    padded, (ph, pw) = pad_to_multiple(arr, 4)
    assert padded.shape == (4, 8) and (ph, pw) == (1, 3)
    assert np.array_equal(padded[:3, :5], arr)
    same, pads = pad_to_multiple(arr, 1)
    assert pads == (0, 0) and same is arr


def test_gray_consistency_zero_for_exact_match():
    g = _gray()
    rgb = np.repeat(g[..., None], 3, axis=2)
    assert gray_consistency(rgb, g) < 1e-7


def test_unpaired_checkpoints_rejected(micro_run_dir, tmp_path, toy_data_dir):
    import shutil

    from latentcolor.training import TrainConfig, run_stage
    from conftest import MICRO_OVERRIDES

    mixed = tmp_path / "mixed"
    shutil.copytree(micro_run_dir, mixed)
    other = tmp_path / "other"
    overrides = dict(MICRO_OVERRIDES)
    overrides["seed"] = 99
    run_stage(TrainConfig(stage="autoencoder", data_dir=str(toy_data_dir),
                          run_dir=str(other), steps=2, **overrides))
    shutil.copy(other / "autoencoder.ckpt", mixed / "autoencoder.ckpt")
    with pytest.raises(CheckpointError, match="unpaired"):
        ModelBundle.load(mixed)

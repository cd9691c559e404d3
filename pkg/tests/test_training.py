import json

import numpy as np
import pytest
import torch

from latentcolor.errors import CheckpointError
from latentcolor.training import (
    TrainConfig,
    generate_toy_dataset,
    ingest_dataset,
    load_checkpoint,
    run_stage,
    save_checkpoint,
)
from latentcolor.training.checkpoint import (
    load_optimizer_arrays,
    load_state_arrays,
    module_hash,
    optimizer_arrays,
    state_dict_arrays,
)
from latentcolor.training.data import PALETTE
from latentcolor.training.stages import RunLock

from conftest import MICRO_OVERRIDES


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    blocks = {
        "weights": {"a": rng.standard_normal((3, 4)).astype(np.float32), "b": np.arange(5)},
        "other": {"c": rng.standard_normal(7)},
    }
    config = {"x": 1, "nested": {"y": [1, 2]}}
    meta = {"step": 12}
    hashes = save_checkpoint(tmp_path / "test.ckpt", config, blocks, meta)
    ckpt = load_checkpoint(tmp_path / "test.ckpt")
    assert ckpt.config == config
    assert ckpt.meta["step"] == 12
    assert ckpt.block_hashes == hashes
    for bname, arrays in blocks.items():
        for aname, arr in arrays.items():
            assert np.array_equal(ckpt.blocks[bname][aname], arr)


def test_checkpoint_detects_corruption(tmp_path):
    save_checkpoint(tmp_path / "c.ckpt", {}, {"w": {"a": np.ones(4)}}, {})
    raw = bytearray((tmp_path / "c.ckpt").read_bytes())
    raw[-3] ^= 0xFF
    (tmp_path / "c.ckpt").write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "c.ckpt")


def test_module_state_roundtrip_and_hash():
    torch.manual_seed(0)
    net = torch.nn.Sequential(torch.nn.Linear(4, 8), torch.nn.Linear(8, 2))
    arrays = state_dict_arrays(net)
    h1 = module_hash(net)
    torch.manual_seed(1)
    other = torch.nn.Sequential(torch.nn.Linear(4, 8), torch.nn.Linear(8, 2))
    assert module_hash(other) != h1
    load_state_arrays(other, arrays)
    assert module_hash(other) == h1


def test_optimizer_state_roundtrip():
    torch.manual_seed(0)
    net = torch.nn.Linear(4, 4)
    opt = torch.optim.AdamW(net.parameters(), lr=1e-3)
    for _ in range(3):
        loss = net(torch.randn(2, 4)).pow(2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    arrays, groups = optimizer_arrays(opt)
    opt2 = torch.optim.AdamW(net.parameters(), lr=1e-3)
    load_optimizer_arrays(opt2, arrays, groups)
    s1, s2 = opt.state_dict(), opt2.state_dict()
    assert str(s1["param_groups"]) == str(s2["param_groups"])
    for k in s1["state"]:
        for key in s1["state"][k]:
            assert torch.equal(s1["state"][k][key], s2["state"][k][key])


def test_ingest_missing_and_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_dataset(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValueError, match="no images found"):
        ingest_dataset(empty)


def test_ingest_manifest_errors(tmp_path):
    root = tmp_path / "ds"
    (root / "images").mkdir(parents=True)
    (root / "captions.tsv").write_text("images/missing.png\tsome caption\n")
    with pytest.raises(FileNotFoundError, match="captions.tsv:1"):
        ingest_dataset(root)
    # unreadable image reported with line number
    (root / "images" / "bad.png").write_bytes(b"not a png")
    (root / "captions.tsv").write_text("images/bad.png\tx\n")
    with pytest.raises(ValueError, match="captions.tsv:1"):
        ingest_dataset(root)


def test_ingest_caption_defaults_to_empty(tmp_path):
    ds = generate_toy_dataset(tmp_path / "toy", n=3, resolution=32, seed=0)
    manifest = tmp_path / "toy" / "captions.tsv"
    lines = manifest.read_text().splitlines()
    lines[1] = lines[1].split("\t")[0]  # drop the caption
    manifest.write_text("\n".join(lines) + "\n")
    ds = ingest_dataset(tmp_path / "toy")
    assert ds.caption(1) == ""
    assert ds.caption(0) != ""


def test_toy_dataset_determinism_and_captions(tmp_path):
    a = generate_toy_dataset(tmp_path / "a", n=6, resolution=32, seed=3)
    b = generate_toy_dataset(tmp_path / "b", n=6, resolution=32, seed=3)
    for i in range(6):
        assert np.array_equal(a.load_image(i, 32), b.load_image(i, 32))
        assert a.caption(i) == b.caption(i)
    # captions mention only colors present in the scene metadata
    for scene in a.scenes:
        for shape in scene["shapes"]:
            assert shape["color"] in scene["caption"]


def test_toy_dataset_covers_all_hues(tmp_path):
    ds = generate_toy_dataset(tmp_path / "hues", n=120, resolution=32, seed=0)
    seen = {s["color"] for scene in ds.scenes for s in scene["shapes"]}
    assert seen == set(PALETTE)


def test_stage_dag_enforced(tmp_path, toy_data_dir):
    config = TrainConfig(
        stage="guider", data_dir=str(toy_data_dir), run_dir=str(tmp_path / "run"),
        steps=1, **MICRO_OVERRIDES,
    )
    with pytest.raises(CheckpointError, match="requires a completed"):
        run_stage(config)


def test_run_lock_exclusive(tmp_path):
    with RunLock(tmp_path):
        with pytest.raises(RuntimeError, match="locked"):
            with RunLock(tmp_path):
                pass
    # released afterwards
    with RunLock(tmp_path):
        pass


def test_resume_is_bit_exact(tmp_path, toy_data_dir):
    def losses(run_dir):
        path = run_dir / "autoencoder_metrics.jsonl"
        return [
            (json.loads(line)["step"], json.loads(line)["loss"])
            for line in path.read_text().splitlines()
        ]

    full_dir = tmp_path / "full"
    run_stage(TrainConfig(stage="autoencoder", data_dir=str(toy_data_dir),
                          run_dir=str(full_dir), steps=14, **MICRO_OVERRIDES))
    split_dir = tmp_path / "split"
    run_stage(TrainConfig(stage="autoencoder", data_dir=str(toy_data_dir),
                          run_dir=str(split_dir), steps=4, **MICRO_OVERRIDES))
    run_stage(TrainConfig(stage="autoencoder", data_dir=str(toy_data_dir),
                          run_dir=str(split_dir), steps=14, **MICRO_OVERRIDES))
    assert losses(full_dir) == losses(split_dir)


def test_metrics_log_monotone_and_finite(micro_run_dir):
    for stage in ("autoencoder", "diffusion", "guider", "lightness"):
        rows = [
            json.loads(line)
            for line in (micro_run_dir / f"{stage}_metrics.jsonl").read_text().splitlines()
        ]
        steps = [r["step"] for r in rows]
        assert steps == sorted(steps)
        assert all(np.isfinite(r["loss"]) for r in rows)


def test_frozen_hashes_recorded(micro_run_dir):
    guider_ckpt = load_checkpoint(micro_run_dir / "guider.ckpt")
    diff_ckpt = load_checkpoint(micro_run_dir / "diffusion.ckpt")
    ae_ckpt = load_checkpoint(micro_run_dir / "autoencoder.ckpt")
    assert guider_ckpt.meta["frozen"]["denoiser"] == diff_ckpt.block_hashes["denoiser"]
    assert guider_ckpt.meta["frozen"]["autoencoder"] == ae_ckpt.block_hashes["autoencoder"]
    light_ckpt = load_checkpoint(micro_run_dir / "lightness.ckpt")
    assert light_ckpt.meta["frozen"]["autoencoder"] == ae_ckpt.block_hashes["autoencoder"]


def test_train_config_yaml_roundtrip(tmp_path):
    config = TrainConfig(stage="autoencoder", data_dir="d", run_dir="r", steps=7,
                         ae={"base_channels": 16, "channel_mults": [1, 2, 2]})
    path = tmp_path / "cfg.yaml"
    config.to_yaml(path)
    back = TrainConfig.from_yaml(path)
    assert back == config
    with pytest.raises(ValueError):
        TrainConfig(stage="bogus", data_dir="d", run_dir="r")

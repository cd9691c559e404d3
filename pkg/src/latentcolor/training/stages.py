"""Four-stage training orchestration with a strict dependency DAG:

    autoencoder -> diffusion -> guider
                \\-> lightness

Each stage writes a checkpoint containing model blocks, optimizer state, and
RNG state so interrupted runs resume bit-exactly. Frozen upstream blocks are
hash-verified before and after every run.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import yaml

from ..autoencoder.losses import PatchDiscriminator
from ..autoencoder.model import Autoencoder, AutoencoderConfig
from ..autoencoder.training import AutoencoderTrainer
from ..diffusion.losses import ldm_loss
from ..diffusion.schedule import make_schedule
from ..diffusion.text import TextEncoder, Vocabulary
from ..diffusion.unet import Denoiser, DenoiserConfig
from ..errors import CheckpointError
from ..guider import DUMMY_CAPTIONS, Guider, GuiderConfig, GuiderTrainer, caption_dropout
from ..imageproc.hints import sample_hint_map
from ..imageproc.quantize import QuantizedRegionMap, quantize_colors
from ..imageproc.superpixels import SuperpixelLabels, slic_superpixels
from ..lightness import LightnessDecoder, LightnessTrainer
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_optimizer_arrays,
    load_state_arrays,
    module_hash,
    optimizer_arrays,
    save_checkpoint,
    state_dict_arrays,
)
from .data import CaptionedDataset, ingest_dataset

STAGES = ("autoencoder", "diffusion", "guider", "lightness")
STAGE_REQUIRES = {
    "autoencoder": (),
    "diffusion": ("autoencoder",),
    "guider": ("autoencoder", "diffusion"),
    "lightness": ("autoencoder",),
}
DEFAULT_STEPS = {"autoencoder": 5000, "diffusion": 20000, "guider": 5000, "lightness": 5000}
# From-scratch pretraining stages use a faster rate than the fine-tuning stages.
DEFAULT_LR = {"autoencoder": 1e-4, "diffusion": 1e-4, "guider": 1e-5, "lightness": 1e-5}


@dataclass
class TrainConfig:
    stage: str
    data_dir: str
    run_dir: str
    steps: Optional[int] = None
    batch_size: int = 16
    lr: Optional[float] = None
    seed: int = 0
    resolution: int = 64
    checkpoint_every: int = 1000
    disc_warmup: int = 500
    adaptive_every: int = 1  # adversarial-weight refresh cadence
    fusion_lr_mult: float = 1.0  # guider tap-fusion learning-rate multiplier
    n_segments: Optional[int] = None  # hint regions; defaults to resolution
    palette_k: int = 16
    ae: dict = field(default_factory=dict)
    denoiser: dict = field(default_factory=dict)
    guider: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage '{self.stage}', expected one of {STAGES}")
        if self.steps is None:
            self.steps = DEFAULT_STEPS[self.stage]
        if self.lr is None:
            self.lr = DEFAULT_LR[self.stage]
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.n_segments is None:
            self.n_segments = self.resolution

    def to_yaml(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(asdict(self), sort_keys=True))

    @classmethod
    def from_yaml(cls, path, **overrides) -> "TrainConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        data.update(overrides)
        return cls(**data)


class RunLock:
    """Exclusive lock file guarding a checkpoint directory."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"run directory is locked by another training run: {self.path}"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


class MetricsLog:
    """Append-only JSONL of per-step losses; truncated past the resume point."""

    def __init__(self, path: Path, resume_step: int):
        self.path = Path(path)
        if self.path.exists() and resume_step > 0:
            kept = [
                line
                for line in self.path.read_text().splitlines()
                if line.strip() and json.loads(line)["step"] < resume_step
            ]
            self.path.write_text("\n".join(kept) + ("\n" if kept else ""))
        elif resume_step == 0:
            self.path.write_text("")
        self._fh = open(self.path, "a")

    def write(self, row: dict) -> None:
        self._fh.write(json.dumps(row) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _rng_blocks(torch_gen: torch.Generator, np_rng: np.random.Generator):
    arrays = {"torch_gen": torch_gen.get_state().numpy()}
    meta = {"np_state": json.dumps(np_rng.bit_generator.state)}
    return arrays, meta


def _restore_rngs(ckpt: Checkpoint, torch_gen: torch.Generator, np_rng: np.random.Generator):
    torch_gen.set_state(torch.from_numpy(ckpt.blocks["rng"]["torch_gen"].copy()))
    np_rng.bit_generator.state = json.loads(ckpt.meta["np_state"])


def _plot_losses(log_path: Path, out_path: Path, stage: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
    if not rows:
        return
    steps = [r["step"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    keys = [k for k in rows[0] if k not in ("step", "lr", "wallclock") and isinstance(rows[0][k], float)]
    for key in keys:
        ax.plot(steps, [r.get(key, float("nan")) for r in rows], label=key, linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(f"{stage} training losses")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _check_frozen(name: str, module: torch.nn.Module, expected: str) -> None:
    got = module_hash(module)
    if got != expected:
        raise CheckpointError(
            f"frozen block '{name}' changed during training: {expected[:12]} -> {got[:12]}"
        )


def stage_checkpoint_path(run_dir, stage: str) -> Path:
    return Path(run_dir) / f"{stage}.ckpt"


def _require_stages(config: TrainConfig) -> dict[str, Checkpoint]:
    """Load prerequisite checkpoints, enforcing the stage DAG."""
    found = {}
    for req in STAGE_REQUIRES[config.stage]:
        path = stage_checkpoint_path(config.run_dir, req)
        if not path.exists():
            raise CheckpointError(
                f"stage '{config.stage}' requires a completed '{req}' checkpoint at {path}"
            )
        found[req] = load_checkpoint(path)
    return found


def compute_latent_scale(ae: Autoencoder, dataset: CaptionedDataset, config: TrainConfig) -> float:
    """1 / std of quantized latents over a seeded sample of the dataset."""
    rng = np.random.default_rng(config.seed)
    count = min(len(dataset), 16 * config.batch_size)
    idx = rng.permutation(len(dataset))[:count]
    values = []
    with torch.no_grad():
        for start in range(0, count, config.batch_size):
            batch = dataset.load_batch(idx[start : start + config.batch_size], config.resolution)
            z_q, _, _ = ae.quantize(ae.encode(batch))
            values.append(z_q.flatten())
    std = float(torch.cat(values).std())
    return 1.0 / max(std, 1e-8)


def load_image_cache(dataset: CaptionedDataset, resolution: int) -> torch.Tensor:
    """All dataset images as one (N, 3, H, W) tensor (loading is the per-step
    bottleneck on small models, and the pipeline applies no augmentation)."""
    return dataset.load_batch(range(len(dataset)), resolution)


def latent_cache(ae: Autoencoder, images: torch.Tensor, batch_size: int = 32) -> torch.Tensor:
    """Quantized (unscaled) latents of every image under a frozen autoencoder."""
    outs = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            z_q, _, _ = ae.quantize(ae.encode(images[start : start + batch_size]))
            outs.append(z_q)
    return torch.cat(outs)


def build_qmap_cache(
    dataset: CaptionedDataset, config: TrainConfig, cache_dir: Path
) -> list[QuantizedRegionMap]:
    """Superpixel + palette maps per image, cached on disk (pure function of data)."""
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"qmaps_r{config.resolution}_s{config.n_segments}_k{config.palette_k}_n{len(dataset)}.npz"
    cache_path = cache_dir / key
    if cache_path.exists():
        data = np.load(cache_path)
        labels = data["labels"]
        counts = data["counts"]
        colors = data["colors"]
        qmaps = []
        offset = 0
        for i in range(labels.shape[0]):
            n = int(counts[i])
            sp = SuperpixelLabels(labels[i].astype(np.int32), n)
            qmaps.append(QuantizedRegionMap(sp, colors[offset : offset + n].copy()))
            offset += n
        return qmaps
    qmaps = []
    for i in range(len(dataset)):
        img = dataset.load_image(i, config.resolution).astype(np.float64)
        sp = slic_superpixels(np.clip(img, 0.0, 1.0), config.n_segments)
        qmaps.append(quantize_colors(np.clip(img, 0.0, 1.0), sp, config.palette_k))
    np.savez_compressed(
        cache_path,
        labels=np.stack([q.labels.labels.astype(np.int16) for q in qmaps]),
        counts=np.asarray([q.labels.n_segments for q in qmaps], dtype=np.int32),
        colors=np.concatenate([q.region_color for q in qmaps], axis=0),
    )
    return qmaps


def rgb_batch_to_gray_cache(images: torch.Tensor) -> torch.Tensor:
    from ..lightness import rgb_batch_to_gray

    return rgb_batch_to_gray(images)


def hint_planes_for_batch(
    qmaps: list[QuantizedRegionMap], indices, np_rng: np.random.Generator
) -> torch.Tensor:
    """Fresh random hint maps for a batch, stacked as (B, 4, H, W)."""
    planes = []
    for i in indices:
        fraction = float(np_rng.uniform(0.3, 0.5))
        seed = int(np_rng.integers(0, 2**31 - 1))
        hm = sample_hint_map(qmaps[int(i)], fraction, rng_seed=seed)
        planes.append(hm.planes())
    stacked = np.stack(planes).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(stacked))


def run_stage(config: TrainConfig) -> Path:
    """Run (or resume) one training stage; returns the checkpoint path."""
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(run_dir):
        upstream = _require_stages(config)
        dataset = ingest_dataset(config.data_dir)
        runner = {
            "autoencoder": _run_autoencoder,
            "diffusion": _run_diffusion,
            "guider": _run_guider,
            "lightness": _run_lightness,
        }[config.stage]
        return runner(config, dataset, upstream)


class StageHarness:
    """Shared loop plumbing: resume, RNG, metrics, checkpoints, loss figure."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.run_dir = Path(config.run_dir)
        self.ckpt_path = stage_checkpoint_path(config.run_dir, config.stage)
        self.torch_gen = torch.Generator().manual_seed(config.seed)
        self.np_rng = np.random.default_rng(config.seed)
        self.start_step = 0
        self.resume_ckpt: Optional[Checkpoint] = None
        if self.ckpt_path.exists():
            self.resume_ckpt = load_checkpoint(self.ckpt_path)
            self.start_step = int(self.resume_ckpt.meta["step"])

    @property
    def complete(self) -> bool:
        return self.start_step >= self.config.steps

    def resume_states(self, modules: dict, optimizers: dict) -> None:
        ckpt = self.resume_ckpt
        if ckpt is None:
            return
        for name, module in modules.items():
            load_state_arrays(module, ckpt.require(name))
        for name, opt in optimizers.items():
            load_optimizer_arrays(
                opt, ckpt.require(f"optimizer.{name}"), ckpt.meta[f"param_groups.{name}"]
            )
        _restore_rngs(ckpt, self.torch_gen, self.np_rng)

    def save(self, modules: dict, optimizers: dict, step: int, extra_meta: dict,
             config_payload: dict) -> None:
        blocks = {name: state_dict_arrays(m) for name, m in modules.items()}
        meta = dict(extra_meta)
        for name, opt in optimizers.items():
            arrays, groups = optimizer_arrays(opt)
            blocks[f"optimizer.{name}"] = arrays
            meta[f"param_groups.{name}"] = groups
        rng_arrays, rng_meta = _rng_blocks(self.torch_gen, self.np_rng)
        blocks["rng"] = rng_arrays
        meta.update(rng_meta)
        meta["step"] = step
        meta["stage"] = self.config.stage
        save_checkpoint(self.ckpt_path, config_payload, blocks, meta)

    def loop(self, step_fn, modules: dict, optimizers: dict, extra_meta: dict,
             config_payload: dict, extra_meta_fn=None) -> Path:
        cfg = self.config
        log = MetricsLog(self.run_dir / f"{cfg.stage}_metrics.jsonl", self.start_step)
        try:
            for step in range(self.start_step, cfg.steps):
                losses = step_fn(step)
                row = {"step": step, **losses, "lr": cfg.lr, "wallclock": time.time()}
                log.write(row)
                if (step + 1) % cfg.checkpoint_every == 0 or step + 1 == cfg.steps:
                    meta = dict(extra_meta)
                    if extra_meta_fn is not None:
                        meta.update(extra_meta_fn())
                    self.save(modules, optimizers, step + 1, meta, config_payload)
        finally:
            log.close()
        _plot_losses(
            self.run_dir / f"{cfg.stage}_metrics.jsonl",
            self.run_dir / f"{cfg.stage}_loss.png",
            cfg.stage,
        )
        return self.ckpt_path


def _build_autoencoder(config: TrainConfig) -> Autoencoder:
    return Autoencoder(AutoencoderConfig(**config.ae))


def _load_frozen_autoencoder(ckpt: Checkpoint) -> tuple[Autoencoder, str]:
    ae = Autoencoder(AutoencoderConfig.from_dict(ckpt.config["autoencoder"]))
    load_state_arrays(ae, ckpt.require("autoencoder"))
    ae.eval().requires_grad_(False)
    return ae, ckpt.block_hashes["autoencoder"]


def _run_autoencoder(config: TrainConfig, dataset: CaptionedDataset, upstream) -> Path:
    harness = StageHarness(config)
    if harness.complete:
        return harness.ckpt_path
    torch.manual_seed(config.seed)
    model = _build_autoencoder(config)
    disc = PatchDiscriminator()
    trainer = AutoencoderTrainer(
        model, disc, lr=config.lr, disc_warmup=config.disc_warmup,
        generator=harness.torch_gen, adaptive_every=config.adaptive_every,
    )
    modules = {"autoencoder": model, "discriminator": disc}
    optimizers = {"g": trainer.opt_g, "d": trainer.opt_d}
    harness.resume_states(modules, optimizers)
    trainer.step_count = harness.start_step
    if harness.resume_ckpt is not None:
        trainer.lambda_d = float(harness.resume_ckpt.meta.get("lambda_d", 0.0))
    images = load_image_cache(dataset, config.resolution)

    def step_fn(step: int) -> dict:
        idx = dataset.batch_indices(config.seed, step, config.batch_size)
        return trainer.step(images[idx])

    payload = {"autoencoder": model.config.to_dict(), "train": asdict(config)}
    return harness.loop(step_fn, modules, optimizers, {}, payload,
                        extra_meta_fn=lambda: {"lambda_d": trainer.lambda_d})


def _run_diffusion(config: TrainConfig, dataset: CaptionedDataset, upstream) -> Path:
    harness = StageHarness(config)
    if harness.complete:
        return harness.ckpt_path
    ae, ae_hash = _load_frozen_autoencoder(upstream["autoencoder"])
    torch.manual_seed(config.seed)

    latent_res = config.resolution // ae.config.downsample_factor
    den_overrides = dict(config.denoiser)
    den_cfg = DenoiserConfig(
        in_channels=ae.config.latent_dim, out_channels=ae.config.latent_dim, **den_overrides
    )
    denoiser = Denoiser(den_cfg)
    if harness.resume_ckpt is not None:
        vocab = Vocabulary.from_dict(harness.resume_ckpt.config["vocab"])
        latent_scale = float(harness.resume_ckpt.meta["latent_scale"])
    else:
        captions = [dataset.caption(i) for i in range(len(dataset))] + list(DUMMY_CAPTIONS)
        vocab = Vocabulary.build(captions)
        latent_scale = compute_latent_scale(ae, dataset, config)
    text_encoder = TextEncoder(vocab, dim=den_cfg.text_dim)
    sched = make_schedule(**config.schedule)

    opt = torch.optim.AdamW(
        list(denoiser.parameters()) + list(text_encoder.parameters()), lr=config.lr
    )
    modules = {"denoiser": denoiser, "text_encoder": text_encoder}
    optimizers = {"g": opt}
    harness.resume_states(modules, optimizers)

    images = load_image_cache(dataset, config.resolution)
    latents = latent_cache(ae, images) * latent_scale

    def step_fn(step: int) -> dict:
        idx = dataset.batch_indices(config.seed, step, config.batch_size)
        z0 = latents[idx]
        caps = [caption_dropout(dataset.caption(int(i)), harness.np_rng) for i in idx]
        text = text_encoder.embed(caps)
        loss = ldm_loss(lambda z_t, t: denoiser(z_t, t, text), z0, sched, harness.torch_gen)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        return {"loss": float(loss.detach())}

    payload = {
        "autoencoder": ae.config.to_dict(),
        "denoiser": den_cfg.to_dict(),
        "vocab": vocab.to_dict(),
        "schedule": {"T": sched.T, "beta_min": float(sched.beta[0]), "beta_max": float(sched.beta[-1])},
        "train": asdict(config),
    }
    meta = {"latent_scale": latent_scale, "frozen": {"autoencoder": ae_hash}, "latent_res": latent_res}
    try:
        return harness.loop(step_fn, modules, optimizers, meta, payload)
    finally:
        _check_frozen("autoencoder", ae, ae_hash)


def _run_guider(config: TrainConfig, dataset: CaptionedDataset, upstream) -> Path:
    harness = StageHarness(config)
    if harness.complete:
        return harness.ckpt_path
    ae, ae_hash = _load_frozen_autoencoder(upstream["autoencoder"])
    diff_ckpt = upstream["diffusion"]
    den_cfg = DenoiserConfig.from_dict(diff_ckpt.config["denoiser"])
    base = Denoiser(den_cfg)
    load_state_arrays(base, diff_ckpt.require("denoiser"))
    base.eval().requires_grad_(False)
    vocab = Vocabulary.from_dict(diff_ckpt.config["vocab"])
    text_encoder = TextEncoder(vocab, dim=den_cfg.text_dim)
    load_state_arrays(text_encoder, diff_ckpt.require("text_encoder"))
    text_encoder.eval().requires_grad_(False)
    sched = make_schedule(**{
        k: diff_ckpt.config["schedule"][v]
        for k, v in (("T", "T"), ("beta_min", "beta_min"), ("beta_max", "beta_max"))
    })
    latent_scale = float(diff_ckpt.meta["latent_scale"])
    base_hash = diff_ckpt.block_hashes["denoiser"]
    text_hash = diff_ckpt.block_hashes["text_encoder"]

    torch.manual_seed(config.seed)
    guider = Guider(den_cfg, ae.config, GuiderConfig(**config.guider))
    guider.init_from_base(base)
    guider.init_cond_from_encoder(ae.encoder)
    trainer = GuiderTrainer(
        guider, base, ae, text_encoder, sched, latent_scale=latent_scale, lr=config.lr,
        fusion_lr_mult=config.fusion_lr_mult,
    )
    modules = {"guider": guider}
    optimizers = {"g": trainer.opt}
    harness.resume_states(modules, optimizers)
    trainer.step_count = harness.start_step

    qmaps = build_qmap_cache(dataset, config, Path(config.run_dir))
    images = load_image_cache(dataset, config.resolution)
    latents = latent_cache(ae, images) * latent_scale
    grays = rgb_batch_to_gray_cache(images)

    def step_fn(step: int) -> dict:
        idx = dataset.batch_indices(config.seed, step, config.batch_size)
        caps = [caption_dropout(dataset.caption(int(i)), harness.np_rng) for i in idx]
        hints = hint_planes_for_batch(qmaps, idx, harness.np_rng)
        return trainer.step(None, caps, hints, harness.torch_gen,
                            z0=latents[idx], g=grays[idx])

    payload = {
        "autoencoder": ae.config.to_dict(),
        "denoiser": den_cfg.to_dict(),
        "guider": guider.config.to_dict(),
        "vocab": vocab.to_dict(),
        "schedule": diff_ckpt.config["schedule"],
        "train": asdict(config),
    }
    meta = {
        "latent_scale": latent_scale,
        "frozen": {"autoencoder": ae_hash, "denoiser": base_hash, "text_encoder": text_hash},
    }
    try:
        return harness.loop(step_fn, modules, optimizers, meta, payload)
    finally:
        _check_frozen("denoiser", base, base_hash)
        _check_frozen("text_encoder", text_encoder, text_hash)
        _check_frozen("autoencoder", ae, ae_hash)


def _run_lightness(config: TrainConfig, dataset: CaptionedDataset, upstream) -> Path:
    harness = StageHarness(config)
    if harness.complete:
        return harness.ckpt_path
    ae, ae_hash = _load_frozen_autoencoder(upstream["autoencoder"])
    decoder_hash = module_hash(ae.decoder)
    torch.manual_seed(config.seed)
    lightness = LightnessDecoder(ae)
    lightness.gray_encoder.init_from_encoder(ae.encoder)
    disc = PatchDiscriminator()
    # Continue the adversarial game from the stage-1 discriminator.
    load_state_arrays(disc, upstream["autoencoder"].require("discriminator"))
    trainer = LightnessTrainer(lightness, disc, lr=config.lr,
                               disc_warmup=config.disc_warmup,
                               adaptive_every=config.adaptive_every)
    modules = {"lightness": lightness, "discriminator": disc}
    optimizers = {"g": trainer.opt_g, "d": trainer.opt_d}
    harness.resume_states(modules, optimizers)
    trainer.step_count = harness.start_step
    if harness.resume_ckpt is not None:
        trainer.lambda_d = float(harness.resume_ckpt.meta.get("lambda_d", 0.0))
    images = load_image_cache(dataset, config.resolution)
    latents = latent_cache(ae, images)

    def step_fn(step: int) -> dict:
        idx = dataset.batch_indices(config.seed, step, config.batch_size)
        return trainer.step(images[idx], z_q=latents[idx])

    payload = {"autoencoder": ae.config.to_dict(), "train": asdict(config)}
    meta = {"frozen": {"autoencoder": ae_hash, "decoder": decoder_hash}}
    try:
        return harness.loop(step_fn, modules, optimizers, meta, payload,
                            extra_meta_fn=lambda: {"lambda_d": trainer.lambda_d})
    finally:
        _check_frozen("decoder", ae.decoder, decoder_hash)
        _check_frozen("autoencoder", ae, ae_hash)

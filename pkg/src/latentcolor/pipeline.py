"""End-to-end colorization: guided DDIM sampling in latent space followed by
lightness-aware decoding, plus the strength-0.45 img2img baseline."""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .autoencoder.model import Autoencoder, AutoencoderConfig
from .diffusion.sampling import ddim_sample, sdedit_sample
from .diffusion.schedule import make_schedule
from .diffusion.text import TextEncoder, Vocabulary
from .diffusion.unet import Denoiser, DenoiserConfig
from .errors import CheckpointError
from .guider import Guider, GuiderConfig
from .imageproc.color import check_gray, rgb_to_gray
from .imageproc.hints import DEFAULT_HINT_RADIUS, HintMap, HintPoint, hints_from_user_points
from .lightness import LightnessDecoder
from .training.checkpoint import load_checkpoint, load_state_arrays
from .training.stages import stage_checkpoint_path

DEFAULT_GUIDANCE = 7.5
DEFAULT_STEPS = 50
SDEDIT_STRENGTH = 0.45
MIN_SIDE_FACTOR = 8  # smallest accepted side is f * this


@dataclass
class ColorizationRequest:
    gray: np.ndarray  # (H, W) in [0, 1]
    caption: str = ""
    negative: str = ""
    points: Optional[list[HintPoint]] = None
    steps: int = DEFAULT_STEPS
    guidance: float = DEFAULT_GUIDANCE
    seed: int = 0
    variants: int = 1
    eta: float = 0.0
    hint_radius: int = DEFAULT_HINT_RADIUS

    def __post_init__(self):
        self.gray = check_gray(self.gray)
        if self.variants < 1:
            raise ValueError("variants must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class ColorizationResult:
    images: list  # (H, W, 3) float arrays
    seeds: list
    latents: list  # (h, w, c) float arrays (latent color priors)
    elapsed_s: float
    model_hashes: dict = field(default_factory=dict)


class ModelBundle:
    """All trained components loaded from one run directory, pairing-verified."""

    def __init__(self, autoencoder, denoiser, text_encoder, guider, lightness, sched,
                 latent_scale: float, hashes: dict, resolution: int = 64):
        self.autoencoder = autoencoder
        self.denoiser = denoiser
        self.text_encoder = text_encoder
        self.guider = guider
        self.lightness = lightness
        self.sched = sched
        self.latent_scale = latent_scale
        self.hashes = hashes
        self.resolution = resolution
        for m in (autoencoder, denoiser, text_encoder, guider, lightness):
            m.eval().requires_grad_(False)

    @classmethod
    def load(cls, model_dir) -> "ModelBundle":
        model_dir = Path(model_dir)
        ae_ckpt = load_checkpoint(stage_checkpoint_path(model_dir, "autoencoder"))
        diff_ckpt = load_checkpoint(stage_checkpoint_path(model_dir, "diffusion"))
        guider_ckpt = load_checkpoint(stage_checkpoint_path(model_dir, "guider"))
        light_ckpt = load_checkpoint(stage_checkpoint_path(model_dir, "lightness"))

        ae_hash = ae_ckpt.block_hashes["autoencoder"]
        for name, ckpt in (("diffusion", diff_ckpt), ("guider", guider_ckpt),
                           ("lightness", light_ckpt)):
            expected = ckpt.meta.get("frozen", {}).get("autoencoder")
            if expected != ae_hash:
                raise CheckpointError(
                    f"unpaired checkpoints: {name} was trained against autoencoder "
                    f"{str(expected)[:12]}, found {ae_hash[:12]}"
                )
        for name in ("denoiser", "text_encoder"):
            expected = guider_ckpt.meta.get("frozen", {}).get(name)
            if expected != diff_ckpt.block_hashes[name]:
                raise CheckpointError(
                    f"unpaired checkpoints: guider was trained against {name} "
                    f"{str(expected)[:12]}, found {diff_ckpt.block_hashes[name][:12]}"
                )

        ae = Autoencoder(AutoencoderConfig.from_dict(ae_ckpt.config["autoencoder"]))
        load_state_arrays(ae, ae_ckpt.require("autoencoder"))

        den_cfg = DenoiserConfig.from_dict(diff_ckpt.config["denoiser"])
        denoiser = Denoiser(den_cfg)
        load_state_arrays(denoiser, diff_ckpt.require("denoiser"))
        vocab = Vocabulary.from_dict(diff_ckpt.config["vocab"])
        text_encoder = TextEncoder(vocab, dim=den_cfg.text_dim)
        load_state_arrays(text_encoder, diff_ckpt.require("text_encoder"))

        guider = Guider(den_cfg, ae.config, GuiderConfig.from_dict(guider_ckpt.config["guider"]))
        load_state_arrays(guider, guider_ckpt.require("guider"))

        lightness = LightnessDecoder(ae)
        load_state_arrays(lightness, light_ckpt.require("lightness"))

        sched_cfg = diff_ckpt.config["schedule"]
        sched = make_schedule(sched_cfg["T"], sched_cfg["beta_min"], sched_cfg["beta_max"])
        hashes = {
            "autoencoder": ae_hash,
            "denoiser": diff_ckpt.block_hashes["denoiser"],
            "text_encoder": diff_ckpt.block_hashes["text_encoder"],
            "guider": guider_ckpt.block_hashes["guider"],
            "lightness": light_ckpt.block_hashes["lightness"],
        }
        resolution = int(diff_ckpt.config.get("train", {}).get("resolution", 64))
        return cls(ae, denoiser, text_encoder, guider, lightness, sched,
                   float(diff_ckpt.meta["latent_scale"]), hashes, resolution=resolution)

    @property
    def downsample_factor(self) -> int:
        return self.autoencoder.config.downsample_factor


def pad_to_multiple(arr: np.ndarray, f: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflection-pad the bottom/right of (H, W[, C]) to multiples of f."""
    h, w = arr.shape[:2]
    ph, pw = (-h) % f, (-w) % f
    if ph == 0 and pw == 0:
        return arr, (0, 0)
    pad = ((0, ph), (0, pw)) + ((0, 0),) * (arr.ndim - 2)
    return np.pad(arr, pad, mode="reflect"), (ph, pw)


class Colorizer:
    """Inference façade over a ModelBundle."""

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle

    def _prepare(self, req: ColorizationRequest):
        f = self.bundle.downsample_factor
        h, w = req.gray.shape
        if min(h, w) < f * MIN_SIDE_FACTOR:
            raise ValueError(
                f"image side {min(h, w)} below minimum {f * MIN_SIDE_FACTOR}; upscale first"
            )
        if req.points:
            hint = hints_from_user_points(req.points, req.hint_radius, width=w, height=h)
        else:
            hint = HintMap.empty(h, w)
        gray_padded, _ = pad_to_multiple(req.gray.astype(np.float32), f)
        planes_padded, _ = pad_to_multiple(hint.planes(), f)
        g = torch.from_numpy(gray_padded)[None, None]
        hints = torch.from_numpy(planes_padded.transpose(2, 0, 1))[None]
        return g, hints, (h, w)

    def _guided_predictors(self, g, hints, caption: str, uncond_caption: str):
        bundle = self.bundle
        text_c = bundle.text_encoder.embed([caption])
        text_u = bundle.text_encoder.embed([uncond_caption])

        def predict_cond(z, t):
            t_vec = torch.full((z.shape[0],), int(t), dtype=torch.long)
            return bundle.guider.guided_predict(bundle.denoiser, z, t_vec, text_c, g, hints)

        def predict_uncond(z, t):
            t_vec = torch.full((z.shape[0],), int(t), dtype=torch.long)
            return bundle.guider.guided_predict(bundle.denoiser, z, t_vec, text_u, g, hints)

        return predict_cond, predict_uncond

    def colorize(self, req: ColorizationRequest) -> ColorizationResult:
        """Guided sampling of a latent color prior, decoded with the grayscale shortcut."""
        bundle = self.bundle
        start = time.time()
        g, hints, (h, w) = self._prepare(req)
        f = bundle.downsample_factor
        lat_shape = (1, bundle.autoencoder.config.latent_dim, g.shape[2] // f, g.shape[3] // f)
        predict_c, predict_u = self._guided_predictors(g, hints, req.caption, req.negative)

        images, seeds, latents = [], [], []
        with torch.no_grad():
            for k in range(req.variants):
                seed = req.seed + k
                z = ddim_sample(
                    predict_c,
                    lat_shape,
                    req.steps,
                    bundle.sched,
                    eta=req.eta,
                    guidance=req.guidance,
                    uncond_fn=predict_u,
                    seed=seed,
                )
                z_c = z / bundle.latent_scale
                img = bundle.lightness.inject_decode(z_c, g)
                out = img[0].permute(1, 2, 0).numpy()[:h, :w]
                images.append(np.ascontiguousarray(out))
                seeds.append(seed)
                latents.append(z_c[0].permute(1, 2, 0).numpy())
        return ColorizationResult(images, seeds, latents, time.time() - start, dict(bundle.hashes))

    def colorize_with_hints(self, req: ColorizationRequest) -> ColorizationResult:
        """Alias of colorize; hint points ride in on the request."""
        return self.colorize(req)

    def colorize_sdedit_baseline(self, req: ColorizationRequest) -> ColorizationResult:
        """Ablation baseline: noise the gray encode to strength 0.45, denoise with
        the base model only, and decode without the grayscale shortcut."""
        bundle = self.bundle
        start = time.time()
        g, _, (h, w) = self._prepare(req)
        text_c = bundle.text_encoder.embed([req.caption])
        text_u = bundle.text_encoder.embed([req.negative])

        def predict_cond(z, t):
            t_vec = torch.full((z.shape[0],), int(t), dtype=torch.long)
            return bundle.denoiser(z, t_vec, text_c)

        def predict_uncond(z, t):
            t_vec = torch.full((z.shape[0],), int(t), dtype=torch.long)
            return bundle.denoiser(z, t_vec, text_u)

        images, seeds, latents = [], [], []
        with torch.no_grad():
            rgb_from_gray = g.repeat(1, 3, 1, 1)
            z0, _, _ = bundle.autoencoder.quantize(bundle.autoencoder.encode(rgb_from_gray))
            z0 = z0 * bundle.latent_scale
            for k in range(req.variants):
                seed = req.seed + k
                gen = torch.Generator().manual_seed(seed)
                z = sdedit_sample(
                    z0,
                    SDEDIT_STRENGTH,
                    predict_cond,
                    req.steps,
                    bundle.sched,
                    eta=req.eta,
                    guidance=req.guidance,
                    uncond_fn=predict_uncond,
                    generator=gen,
                )
                z_c = z / bundle.latent_scale
                img, _ = bundle.autoencoder.decode(z_c)
                out = img[0].permute(1, 2, 0).numpy()[:h, :w]
                images.append(np.ascontiguousarray(out))
                seeds.append(seed)
                latents.append(z_c[0].permute(1, 2, 0).numpy())
        return ColorizationResult(images, seeds, latents, time.time() - start, dict(bundle.hashes))


def gray_consistency(img: np.ndarray, gray: np.ndarray) -> float:
    """Mean absolute difference between the luma of img and the input grayscale."""
    return float(np.mean(np.abs(rgb_to_gray(np.clip(img, 0, 1)) - gray)))

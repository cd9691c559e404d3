"""Corpus evaluation harness: per-image metrics, Frechet statistics, and a
report writer that emits JSON, CSV, an aligned text table, and figures."""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..imageproc.pngio import load_png
from .measures import FeatureStats, colorfulness, feature_stats, frechet_distance, psnr, ssim

FeatureExtractor = Callable[[np.ndarray], np.ndarray]
PerceptualFn = Callable[[np.ndarray, np.ndarray], float]


@dataclass
class MetricReport:
    dataset_id: str
    extractor_id: str
    per_image: list = field(default_factory=list)
    corpus: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    model_hashes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class EncoderFeatureExtractor:
    """Pooled latent features from a trained encoder, for desk-scale Frechet stats.

    Not comparable to Inception-based scores; the extractor hash is recorded in
    every report so numbers are only compared like for like.
    """

    def __init__(self, autoencoder, pool: int = 2):
        import torch

        self.autoencoder = autoencoder
        self.pool = pool
        self.torch = torch

    @property
    def extractor_id(self) -> str:
        from ..training.checkpoint import module_hash

        return f"encoder-pool{self.pool}-{module_hash(self.autoencoder.encoder)[:12]}"

    def __call__(self, images: np.ndarray) -> np.ndarray:
        torch = self.torch
        batch = torch.from_numpy(images.astype(np.float32)).permute(0, 3, 1, 2)
        with torch.no_grad():
            z = self.autoencoder.encode(batch)
            pooled = torch.nn.functional.adaptive_avg_pool2d(z, self.pool)
        return pooled.flatten(1).numpy().astype(np.float64)


def _extract_in_batches(extractor: FeatureExtractor, images: list, batch: int = 32) -> np.ndarray:
    feats = []
    for i in range(0, len(images), batch):
        feats.append(extractor(np.stack(images[i : i + batch])))
    return np.concatenate(feats, axis=0)


def evaluate_corpus(
    pred_dir,
    gt_dir,
    feature_extractor: Optional[FeatureExtractor] = None,
    perceptual_fn: Optional[PerceptualFn] = None,
) -> MetricReport:
    """Paired PSNR/SSIM plus corpus colorfulness and Frechet distance.

    Pairing is by filename; unpaired files are excluded from paired metrics
    (reported and counted) but still contribute to colorfulness and Frechet.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_files = sorted(p.name for p in pred_dir.glob("*.png"))
    gt_files = sorted(p.name for p in gt_dir.glob("*.png"))
    if not pred_files:
        raise ValueError(f"no predictions found in {pred_dir}")
    paired = [n for n in pred_files if n in set(gt_files)]
    pred_only = [n for n in pred_files if n not in set(gt_files)]
    gt_only = [n for n in gt_files if n not in set(pred_files)]

    extractor_id = "none"
    if feature_extractor is not None:
        extractor_id = getattr(feature_extractor, "extractor_id", "custom")

    report = MetricReport(
        dataset_id=hashlib.sha256("\n".join(pred_files + gt_files).encode()).hexdigest()[:16],
        extractor_id=extractor_id,
        counts={
            "paired": len(paired),
            "pred_only": len(pred_only),
            "gt_only": len(gt_only),
            "skipped": len(pred_only) + len(gt_only),
        },
    )
    for name in pred_only:
        report.warnings.append(f"prediction {name} has no ground-truth pair; skipped")
    for name in gt_only:
        report.warnings.append(f"ground truth {name} has no prediction; skipped")

    preds, gts = [], []
    for name in pred_files:
        preds.append(load_png(pred_dir / name).astype(np.float64))
    for name in gt_files:
        gts.append(load_png(gt_dir / name).astype(np.float64))
    by_name_pred = dict(zip(pred_files, preds))
    by_name_gt = dict(zip(gt_files, gts))

    for name in paired:
        a, b = by_name_pred[name], by_name_gt[name]
        row = {
            "name": name,
            "psnr": psnr(a, b),
            "ssim": ssim(a, b),
            "colorfulness": colorfulness(np.clip(a, 0, 1)),
        }
        if perceptual_fn is not None:
            row["perceptual"] = float(perceptual_fn(a, b))
        report.per_image.append(row)

    all_pred_colorfulness = [colorfulness(np.clip(p, 0, 1)) for p in preds]
    corpus = {
        "mean_colorfulness": float(np.mean(all_pred_colorfulness)),
        "mean_psnr": float(np.mean([r["psnr"] for r in report.per_image])) if paired else None,
        "mean_ssim": float(np.mean([r["ssim"] for r in report.per_image])) if paired else None,
        "frechet": None,
    }
    if perceptual_fn is not None and paired:
        corpus["mean_perceptual"] = float(np.mean([r["perceptual"] for r in report.per_image]))
    if feature_extractor is not None and len(preds) >= 2 and len(gts) >= 2:
        stats_pred = feature_stats(_extract_in_batches(feature_extractor, preds))
        stats_gt = feature_stats(_extract_in_batches(feature_extractor, gts))
        corpus["frechet"] = frechet_distance(stats_pred, stats_gt)
    report.corpus = corpus
    return report


def _format_table(report: MetricReport) -> str:
    cols = [("FID v", report.corpus.get("frechet")),
            ("Colorfulness ^", report.corpus.get("mean_colorfulness")),
            ("PSNR ^", report.corpus.get("mean_psnr")),
            ("SSIM ^", report.corpus.get("mean_ssim"))]
    if "mean_perceptual" in report.corpus:
        cols.append(("Perceptual v", report.corpus.get("mean_perceptual")))
    header = " | ".join(f"{name:>14s}" for name, _ in cols)
    values = " | ".join(
        f"{val:14.4f}" if val is not None else f"{'n/a':>14s}" for _, val in cols
    )
    lines = [
        f"dataset {report.dataset_id}  extractor {report.extractor_id}",
        f"paired {report.counts['paired']}  skipped {report.counts['skipped']}",
        header,
        "-" * len(header),
        values,
    ]
    return "\n".join(lines) + "\n"


def write_report(report: MetricReport, out_dir) -> dict:
    """Write report.json, per-image report.csv, an aligned report.txt, and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    (out / "report.txt").write_text(_format_table(report))

    fieldnames = ["name", "psnr", "ssim", "colorfulness"]
    if report.per_image and "perceptual" in report.per_image[0]:
        fieldnames.append("perceptual")
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(report.per_image)

    figures = {}
    if report.per_image:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        for key in ("psnr", "ssim", "colorfulness"):
            values = [r[key] for r in report.per_image]
            fig, ax = plt.subplots(figsize=(5, 3.2))
            ax.hist(values, bins=24, color="#4878d0", edgecolor="white")
            ax.set_xlabel(key)
            ax.set_ylabel("images")
            ax.set_title(f"{key} distribution (n={len(values)})")
            fig.tight_layout()
            path = fig_dir / f"{key}_hist.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            figures[key] = str(path)
        fig, ax = plt.subplots(figsize=(4.5, 4))
        ax.scatter(
            [r["psnr"] for r in report.per_image],
            [r["ssim"] for r in report.per_image],
            s=12,
            alpha=0.7,
        )
        ax.set_xlabel("psnr")
        ax.set_ylabel("ssim")
        ax.set_title("per-image psnr vs ssim")
        fig.tight_layout()
        fig.savefig(fig_dir / "psnr_vs_ssim.png", dpi=120)
        plt.close(fig)
        figures["scatter"] = str(fig_dir / "psnr_vs_ssim.png")
    return figures

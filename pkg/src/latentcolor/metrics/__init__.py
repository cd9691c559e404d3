from .measures import (
    FeatureStats,
    colorfulness,
    feature_stats,
    frechet_distance,
    psnr,
    ssim,
)
from .report import MetricReport, evaluate_corpus, write_report

__all__ = [
    "FeatureStats",
    "colorfulness",
    "feature_stats",
    "frechet_distance",
    "psnr",
    "ssim",
    "MetricReport",
    "evaluate_corpus",
    "write_report",
]

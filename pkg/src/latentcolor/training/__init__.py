from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import CaptionedDataset, generate_toy_dataset, ingest_dataset
from .stages import STAGES, TrainConfig, run_stage

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "CaptionedDataset",
    "generate_toy_dataset",
    "ingest_dataset",
    "STAGES",
    "TrainConfig",
    "run_stage",
]

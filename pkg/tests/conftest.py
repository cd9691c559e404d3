import numpy as np
import pytest
import torch

from latentcolor.training import TrainConfig, generate_toy_dataset, run_stage

MICRO_OVERRIDES = dict(
    batch_size=2,
    seed=0,
    resolution=32,
    checkpoint_every=100,
    disc_warmup=2,
    n_segments=16,
    palette_k=8,
    ae={"base_channels": 16, "channel_mults": [1, 2, 2], "n_codes": 32},
    denoiser={"base_channels": 16, "channel_mults": [1, 2], "text_dim": 32, "time_dim": 32},
    guider={"cond_channels": 8},
    schedule={"T": 100, "beta_min": 1e-4, "beta_max": 2e-2},
)


@pytest.fixture(scope="session")
def toy_data_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("toydata")
    generate_toy_dataset(path, n=12, resolution=32, seed=1)
    return path


@pytest.fixture(scope="session")
def micro_run_dir(tmp_path_factory, toy_data_dir):
    """A complete (tiny) 4-stage training run shared across tests."""
    run_dir = tmp_path_factory.mktemp("microrun")
    for stage, steps in (("autoencoder", 5), ("diffusion", 5), ("guider", 4), ("lightness", 4)):
        run_stage(
            TrainConfig(
                stage=stage, data_dir=str(toy_data_dir), run_dir=str(run_dir),
                steps=steps, **MICRO_OVERRIDES,
            )
        )
    return run_dir


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(12345)
    np.random.seed(12345)
    yield

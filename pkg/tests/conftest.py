import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_run_config():
    """Tiny architecture used by every training-dependent test."""
    from causalpix.training import parse_config_text

    return parse_config_text(
        "\n".join(
            [
                "image_size = 32",
                "base_channels = 16",
                "channel_mults = 1,2",
                "enc_dim = 64",
                "enc_heads = 4",
                "num_queries = 4",
                "dim_ctx = 48",
                "batch_size = 8",
                "epochs = 1",
                "max_steps = 2",
                "log_every = 1",
                "lr = 1e-3",
            ]
        )
    )


@pytest.fixture(scope="session")
def tiny_dataset():
    """In-memory 32x32 dataset shared across tests (chains guaranteed)."""
    from causalpix.training import wrap_generated
    from causalpix.world.dataset import generate_samples

    return wrap_generated(generate_samples(32, seed=11, chain_fraction=0.5, canvas_size=32))

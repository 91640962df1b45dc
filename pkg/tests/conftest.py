import numpy as np
import pytest

from tscalib.data import synth_dataset
from tscalib.model import EncoderConfig


def small_encoder(variant="local_global", dropout=0.1):
    """Shrunk architecture for fast unit tests."""
    return EncoderConfig(
        conv_channels=(8,), kernel_size=3, d_model=16, n_heads=2, dropout=dropout, variant=variant
    )


@pytest.fixture(scope="session")
def tiny_dataset():
    # 90 instances, 3 classes, short series: enough for loop smoke tests.
    return synth_dataset(30, 3, 30, 1, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

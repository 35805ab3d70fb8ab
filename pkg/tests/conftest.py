"""
Shared fixtures: tiny networks and a tiny on-disk dataset.
"""

# Third party packages
import numpy as np
import pytest

# pyexo2ego libs
from pyexo2ego.libs.nets import UNetConfig
from pyexo2ego.libs.synthdata import build_manifest, write_dataset
from pyexo2ego.libs.trainer import TrainConfig

TINY_SIDE = 16


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_net() -> UNetConfig:
    return UNetConfig(base_width=4, depth=2, shared_prefix=1)


@pytest.fixture
def tiny_train_config(tiny_net: UNetConfig) -> TrainConfig:
    return TrainConfig(
        net=tiny_net, epochs=1, batch_size=2, augment=False, seed=5, psi_seed=7
    )


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory: pytest.TempPathFactory):
    """
    6 train and 4 test side2ego records at 16x16.
    """

    directory = tmp_path_factory.mktemp("tiny_dataset")
    manifest = build_manifest("side2ego", TINY_SIDE, train_size=6, test_size=4, seed=3)
    write_dataset(manifest, directory)
    return directory

"""
Pytest configuration and fixtures for taro-lab tests
"""
import numpy as np
import pytest

from taro_lab.autodiff import Tensor
from taro_lab.models.siamnet import SiamNet
from taro_lab.schemas.configs import (
    AttackConfig,
    ModelConfig,
    ProbeConfig,
    RunConfig,
    SyntheticDatasetSpec,
)
from taro_lab.services.data_service import generate_clusters, save_dataset


@pytest.fixture
def rng():
    """Seeded generator, fresh for every test"""
    return np.random.default_rng(1234)


@pytest.fixture
def small_model_config():
    """Narrow layers so autodiff-heavy tests stay fast"""
    return ModelConfig(input_dim=4, encoder_dims=[8, 6], projector_dims=[6, 5], predictor_dims=[3, 5])


@pytest.fixture
def positive_pair_net(small_model_config):
    return SiamNet.initialize(small_model_config, "positive_pair", np.random.default_rng(7))


@pytest.fixture
def contrastive_net(small_model_config):
    return SiamNet.initialize(small_model_config, "contrastive", np.random.default_rng(7))


@pytest.fixture
def tiny_spec():
    """Four well separated classes in four dimensions"""
    return SyntheticDatasetSpec(
        n_classes=4, dim=4, samples_per_class=20, separation=6.0, within_std=0.5, seed=3
    )


@pytest.fixture
def tiny_dataset(tiny_spec):
    return generate_clusters(tiny_spec)


@pytest.fixture
def tiny_run_config(tiny_spec, small_model_config):
    """Run configuration that trains in well under a second per epoch"""
    return RunConfig(
        dataset=tiny_spec,
        model=small_model_config,
        train_attack=AttackConfig(epsilon=0.1, alpha=0.05, steps=2),
        eval_attack=AttackConfig(epsilon=0.1, alpha=0.02, steps=3),
        probe=ProbeConfig(epochs=5, batch_size=16),
        epochs=2,
        batch_size=8,
        seed=11,
    )


@pytest.fixture
def data_dir(tmp_path, tiny_dataset):
    """Temporary data directory with train.csv, test.csv and spec.json"""
    path = tmp_path / "data"
    save_dataset(tiny_dataset, path)
    return path


@pytest.fixture
def identity_net():
    """One-layer encoder and projector with identity weights, so e == z == p == x"""
    def build(dim: int = 2) -> SiamNet:
        eye, zero = Tensor(np.eye(dim)), Tensor(np.zeros(dim))
        return SiamNet({
            "encoder.0.W": eye,
            "encoder.0.b": zero,
            "projector.0.W": eye,
            "projector.0.b": zero,
        })
    return build

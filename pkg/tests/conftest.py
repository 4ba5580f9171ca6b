"""Shared fixtures and the ``--run-slow`` switch for end-to-end runs."""

from collections.abc import Generator

import numpy as np
import pytest
import torch

from src.core.config import ModelConfig, make_model_config


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run end-to-end training tests marked slow",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded numpy generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_config() -> ModelConfig:
    """Reduced architecture that runs quickly on CPU.

    Returns:
        ModelConfig with narrow layers, g=5, B=3 and three iterations
    """
    return make_model_config(
        feature_dim=16,
        corr_feature_dim=24,
        hidden_dim=16,
        context_dim=16,
        corr_dim=16,
        corr_radius=2,
        iterations=3,
    )


@pytest.fixture
def seeded_torch() -> Generator[None, None, None]:
    """Seed torch and restore the default dtype afterwards."""
    torch.manual_seed(0)
    dtype = torch.get_default_dtype()
    yield
    torch.set_default_dtype(dtype)

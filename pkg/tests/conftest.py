import numpy as np
import pytest
from hypothesis import settings

from visbackdoor.agent.model import ModelConfig, init_params
from visbackdoor.gui.dataset import DatasetConfig, generate_dataset
from visbackdoor.gui.templates import default_schema

settings.register_profile("repo", max_examples=30, deadline=None, derandomize=True)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def small_config(schema):
    """A 16x16 model small enough for finite differences and oracle comparisons."""
    return ModelConfig.from_schema(schema, image_size=16, channels=(2, 3), pool=(2, 2), proj_dim=6,
                                   embed_dim=5, fusion_dim=7)


@pytest.fixture(scope="session")
def small_params(small_config):
    return init_params(11, small_config)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(DatasetConfig(n_train=40, n_test=30, n_pretrain=0, image_size=16, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

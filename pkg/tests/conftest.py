import numpy as np
import pytest

from fastdad.datasets import features_table
from fastdad.density import ModelConfig, fit
from fastdad.tables import SplitSpec, split_train_val

TINY_FIT_CONFIG = ModelConfig(
    n_layers=2,
    n_heads=2,
    n_components=10,
    d_hidden=16,
    batch_size=32,
    learning_rate=1e-3,
    max_epochs=60,
    patience=15,
)


@pytest.fixture(scope="session")
def duplicated_column_data():
    """600 rows of (x, x): the conditional of either feature is a spike."""
    rng = np.random.default_rng(0)
    x = rng.normal(size=600)
    table = features_table(np.column_stack([x, x]))
    return split_train_val(table, SplitSpec(0.9, seed=1))


@pytest.fixture(scope="session")
def duplicated_column_model(duplicated_column_data):
    train, val = duplicated_column_data
    return fit(train, val, TINY_FIT_CONFIG, seed=7)

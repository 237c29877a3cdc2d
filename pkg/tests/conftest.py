"""
Shared fixtures for the DAMC test suite
"""

import os

import numpy as np
import pytest

from core.experiments import RatingDataset
from core.synthgen import world_from_blocks


def pytest_collection_modifyitems(config, items):
    run_slow = os.getenv("DAMC_RUN_SLOW") == "1"
    has_dataset = bool(os.getenv("DAMC_ML100K_PATH"))
    skip_slow = pytest.mark.skip(reason="set DAMC_RUN_SLOW=1 to run full-scale checks")
    skip_dataset = pytest.mark.skip(reason="set DAMC_ML100K_PATH to the MovieLens-100K u.data file")
    for item in items:
        if "slow" in item.keywords and not run_slow:
            item.add_marker(skip_slow)
        if "dataset" in item.keywords and not has_dataset:
            item.add_marker(skip_dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def block_world():
    """m = n = 40, two groups of 20, well-separated block PMF"""
    groups = np.repeat([0, 1], 20)
    core = np.array([[1.0, -0.5], [0.3, 2.0]])
    block_pmf = np.array([[1.0, 0.2], [0.2, 1.0]])
    return world_from_blocks(groups, groups, core, block_pmf)


@pytest.fixture
def ml100k_path():
    return os.environ["DAMC_ML100K_PATH"]


@pytest.fixture
def small_ratings():
    """30 users x 20 items with low-rank ratings in [1, 5]"""
    gen = np.random.default_rng(7)
    users, items = 30, 20
    taste = gen.normal(size=(users, 2))
    style = gen.normal(size=(items, 2))
    scores = np.clip(np.rint(3.0 + taste @ style.T), 1, 5)

    mask = gen.random((users, items)) < 0.6
    user_idx, item_idx = np.nonzero(mask)
    import pandas as pd

    frame = pd.DataFrame(
        {
            "user": user_idx.astype(np.int64),
            "item": item_idx.astype(np.int64),
            "rating": scores[user_idx, item_idx],
            "timestamp": np.arange(user_idx.shape[0], dtype=np.int64),
        }
    )
    return RatingDataset(
        frame=frame,
        n_users=users,
        n_items=items,
        user_ids=np.arange(1, users + 1),
        item_ids=np.arange(1, items + 1),
        name="toy",
    )

import json
import os

import numpy as np
import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="desk-scale run; set RUN_SLOW=1 to include it")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def ground_truth():
    with open("tests/ground_truth.json") as f:
        return json.load(f)


class ScriptedSampler:
    """Partner choice given by a function of (round, slot, node); coins are constant."""

    def __init__(self, pick, coin=0.0):
        self.pick = pick
        self.coin = coin

    def targets(self, round_index, slot, n, start=0, stop=None):
        stop = n if stop is None else stop
        nodes = np.arange(start, stop)
        return np.array([self.pick(round_index, slot, int(v)) % n for v in nodes], dtype=np.int64)

    def uniforms(self, round_index, n, start=0, stop=None):
        stop = n if stop is None else stop
        return np.full(stop - start, self.coin, dtype=np.float64)


@pytest.fixture
def scripted_sampler():
    return ScriptedSampler

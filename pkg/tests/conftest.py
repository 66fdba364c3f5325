import os

import pytest

from skillmem.corpus import load_prepared
from skillmem.synth import SynthConfig, make_synthetic

FIXTURE_PATH = os.path.join(os.path.dirname(__file__), "..", "data",
                            "fixture_small.csv")


@pytest.fixture(scope="session")
def fixture_dataset():
    return load_prepared(FIXTURE_PATH)


@pytest.fixture(scope="session")
def small_synth():
    return make_synthetic(SynthConfig(seed=99))

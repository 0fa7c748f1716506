import numpy as np
import pytest
from hypothesis import settings

from srkit.config import parse_config
from srkit.data import synth_generate
from srkit.train import train

settings.register_profile("ci", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_run():
    """The default toy training run, shared across the session.

    Trains the stock configuration (SR after stage 3, channel dropout,
    30-epoch budget with early stopping) once; several analysis and
    acceptance tests read from it.
    """
    run = parse_config({})
    result = train(run.host, run.train, run.data)
    splits = synth_generate(run.data)
    return run, result, splits

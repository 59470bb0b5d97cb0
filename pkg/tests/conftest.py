import numpy as np
import pytest

from veriloop.corpus import synth_corpus
from veriloop.encoder import MockEncoder


@pytest.fixture(scope="session")
def encoder():
    return MockEncoder(dim=16, seed=0)


@pytest.fixture(scope="session")
def synth_records():
    return synth_corpus(3, 200, 0.0, 7)


@pytest.fixture(scope="session")
def synth_embeddings(encoder, synth_records):
    return np.vstack([encoder.embed(r.text) for r in synth_records])

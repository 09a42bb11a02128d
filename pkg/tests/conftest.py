import numpy as np
import pytest

from lpvce.model import MlpClassifier, TrainConfig, make_blobs, train_mlp


@pytest.fixture(scope="session")
def blobs():
    return make_blobs(n_per_class=100, n_classes=4, size=8, seed=0)


@pytest.fixture(scope="session")
def trained(blobs):
    return train_mlp(TrainConfig(hidden=(32,), epochs=30, learning_rate=0.1, seed=0), blobs)


@pytest.fixture
def model(trained):
    return trained.copy()


def random_mlp(rng, d, hidden, k, scale=1.0, temperature=1.0):
    dims = [d, *hidden, k]
    Ws = [rng.normal(scale=scale / np.sqrt(a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
    bs = [rng.normal(scale=0.1, size=b) for b in dims[1:]]
    return MlpClassifier(Ws, bs, temperature)

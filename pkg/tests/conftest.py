import numpy as np
import pytest

from churnkit.dataset import LabeledDataset, month_range
from churnkit.pipeline.generator import GeneratorSpec, generate_synthetic


def make_data(X, y) -> LabeledDataset:
    return LabeledDataset(np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64))


def moons(n, noise=0.15, seed=0):
    """Two interleaved half circles; label 1 is the lower moon."""
    rng = np.random.default_rng(seed)
    n1 = n // 2
    t0 = rng.uniform(0, np.pi, n - n1)
    t1 = rng.uniform(0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower]) + rng.normal(0, noise, (n, 2))
    y = np.r_[np.zeros(n - n1, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    order = rng.permutation(n)
    return X[order], y[order]


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A small generated corpus, 201505..201512, shared by pipeline tests."""
    out = tmp_path_factory.mktemp("corpus")
    generate_synthetic(GeneratorSpec(n_customers=1500, months=month_range(201505, 201512), seed=11), out)
    return out

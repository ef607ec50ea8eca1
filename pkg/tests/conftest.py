"""Shared fixtures. Thread caps are set before numpy loads so timing-
sensitive tests measure single-threaded behavior."""

import os
import sys
from pathlib import Path

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from dcolor import pipeline  # noqa: E402
from dcolor.clustering import ClusterConfig  # noqa: E402
from dcolor.mlp import TrainConfig  # noqa: E402

import synthcorpus  # noqa: E402


@pytest.fixture(scope="session")
def tiny_model():
    """Cheap but valid model over four small synthetic images."""
    cfg = pipeline.EngineConfig(
        cluster=ClusterConfig(epsilon=1e9, mu=2, n0=2, seed=0),
        train=TrainConfig(epochs=2, seed=0),
        samples_per_image=100,
    )
    pairs = synthcorpus.make_corpus(2, size=64)
    return pipeline.train_model(pairs, synthcorpus.CATEGORIES, cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

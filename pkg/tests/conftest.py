import numpy as np
import pytest

from data.preprocessing import prepare_clean
from data.skeleton import from_arrays
from data.synthetic import make_toy_dataset, make_toy_split
from recognition.training import TrainSchedule


@pytest.fixture
def toy_dataset():
    """Nine clean toy sequences: three classes, T = 8, J = 2."""
    return prepare_clean(make_toy_dataset(3, 8, seed=0))


@pytest.fixture
def toy_split():
    train, val = make_toy_split(3, 8, seed=0)
    return prepare_clean(train), prepare_clean(val)


@pytest.fixture
def quick_schedule():
    return TrainSchedule(lr=1e-2, batch_size=4, max_epochs=2, improvement_threshold=0.0, seed=0)


@pytest.fixture
def ramp_dataset():
    """Two classes of linear ramps with a known closed form per frame."""
    t = np.arange(6, dtype=np.float64)[:, None]
    frames = np.stack([t * (i + 1) * np.ones((1, 6)) for i in range(4)])
    return from_arrays(frames, [0, 1, 0, 1], 2, "ramps", subjects=[1, 2, 3, 4])


def _offset_classes(n_per_class, seed, name):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), n_per_class)
    frames = (labels - 1.0)[:, None, None] + rng.normal(0.0, 0.1, size=(len(labels), 8, 6))
    return from_arrays(frames, labels, 3, name, subjects=np.arange(len(labels)) % 5 + 1)


@pytest.fixture
def separable_split():
    """Three classes sitting at constant offsets −1, 0 and +1 with small noise."""
    return _offset_classes(10, 0, "offsets-train"), _offset_classes(10, 1, "offsets-val")


@pytest.fixture
def memorization_set():
    """Ten noise sequences with arbitrary labels; used as both train and validation set."""
    rng = np.random.default_rng(7)
    return from_arrays(rng.normal(size=(10, 8, 6)), [0, 1, 2, 0, 1, 2, 0, 1, 2, 0], 3, "memorize")


@pytest.fixture
def memorization_schedule():
    return TrainSchedule(
        lr=1e-2, batch_size=10, max_epochs=200, plateau_patience=200, early_stop_patience=200,
        improvement_threshold=0.0, seed=0,
    )

import numpy as np
import pytest

from memtrace.data_model import EpochSet


@pytest.fixture
def tiny_epochs():
    """2 trials x 3 channels x 8 samples with easy-to-eyeball values."""
    rng = np.random.default_rng(42)
    return EpochSet(
        subject_id="T01",
        fs=250.0,
        data=rng.normal(size=(2, 3, 8)).astype(np.float32),
        labels=[1, 0],
        channel_names=("A", "B", "C"),
    )


def make_epochs(n_trials=4, n_channels=3, n_samples=16, fs=250.0, seed=0, subject="S01"):
    rng = np.random.default_rng(seed)
    return EpochSet(
        subject_id=subject,
        fs=fs,
        data=rng.normal(size=(n_trials, n_channels, n_samples)),
        labels=rng.integers(0, 2, n_trials),
        channel_names=tuple(f"c{i}" for i in range(n_channels)),
    )

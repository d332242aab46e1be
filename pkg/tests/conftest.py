import numpy as np
import pytest

from datasets import DatasetConfig, TrajectoryDataset
from neurvec import ModelMeta, init_model, zero_model
from ode_systems import HarmonicOscillator, LinearSystem, make_rng


@pytest.fixture
def oscillator():
    return HarmonicOscillator(omega=1.0)


@pytest.fixture
def decay():
    return LinearSystem(rate=-1.0, dim=2)


@pytest.fixture
def oscillator_meta():
    return ModelMeta(system="HarmonicOscillator", scheme="euler", k=10, fine_dt=0.01, eta=0.1)


@pytest.fixture
def small_model(oscillator_meta):
    return init_model(2, 8, oscillator_meta, make_rng(0))


@pytest.fixture
def null_model(oscillator_meta):
    return zero_model(2, 8, oscillator_meta)


@pytest.fixture
def pendulum_config():
    """A tiny 1-link pendulum set: 4 trajectories, 11 samples each."""
    return DatasetConfig(
        system="k-link-pendulum", count=4, delta=0.01, scheme="rk4",
        duration=1.0, eta=0.1, seed=3, params={"links": 1},
    )


@pytest.fixture
def oscillator_dataset(oscillator):
    """Exact oscillator flow sampled every 0.1 over [0, 1], stored as a dataset."""
    config = DatasetConfig(
        system="HarmonicOscillator", count=6, delta=0.01, scheme="rk4",
        duration=1.0, eta=0.1, seed=0,
    )
    rng = make_rng(5)
    u0 = rng.uniform(-1.0, 1.0, size=(6, 2))
    times = np.arange(config.n_samples) * config.eta
    states = np.stack([oscillator.exact(u0, t) for t in times], axis=1)
    return TrajectoryDataset(config=config, times=times, states=states, indices=np.arange(6))

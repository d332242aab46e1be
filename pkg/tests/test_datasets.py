import numpy as np
import pytest

from datasets import (
    DatasetConfig,
    dataset_checksum,
    describe,
    format_description,
    generate,
    load,
    save,
    split,
)
from errors import BadMagic, Divergence, EmptySplit, InvalidConfigError
from neurvec import save_model


# ── Config ──────────────────────────────────────────────────────────────


def test_config_sample_counts():
    cfg = DatasetConfig(system="elastic-pendulum", count=100, delta=1e-3, scheme="rk4",
                        duration=50.0, eta=0.1, seed=0)
    assert cfg.steps_per_sample == 100
    assert cfg.n_samples == 501
    assert cfg.n_steps == 50_000


def test_config_coerces_yaml_strings():
    cfg = DatasetConfig.from_mapping({
        "system": "henon-heiles", "count": 2, "delta": "1e-3", "scheme": "rk4",
        "duration": 1, "eta": "0.5", "seed": 0,
    })
    assert cfg.delta == 1e-3
    assert cfg.eta == 0.5


@pytest.mark.parametrize(
    "changes",
    [
        {"eta": 0.15},            # not a multiple of delta
        {"duration": 1.05},       # not a multiple of eta
        {"count": 0},
        {"role": "validation"},
        {"scheme": "leapfrog"},
        {"delta": "tiny"},
    ],
)
def test_config_validation(changes):
    base = dict(system="henon-heiles", count=2, delta=0.1, scheme="rk4", duration=1.0, eta=0.5, seed=0)
    base.update(changes)
    with pytest.raises(InvalidConfigError):
        DatasetConfig(**base)


def test_config_rejects_unknown_keys():
    with pytest.raises(InvalidConfigError):
        DatasetConfig.from_mapping({"system": "henon-heiles", "count": 1, "delta": 0.1, "scheme": "rk4",
                                    "duration": 1.0, "eta": 0.1, "seed": 0, "colour": "red"})


# ── Generation ──────────────────────────────────────────────────────────


def test_generate_shapes_and_time_axis(pendulum_config):
    ds = generate(pendulum_config)
    assert ds.states.shape == (4, 11, 2)
    np.testing.assert_array_equal(ds.times, np.arange(11) * 0.1)
    np.testing.assert_array_equal(ds.indices, np.arange(4))
    assert ds.config.params == {"links": 1, "g": 9.8}


def test_elastic_pendulum_sample_count():
    cfg = DatasetConfig(system="elastic-pendulum", count=2, delta=1e-2, scheme="rk4",
                        duration=50.0, eta=0.1, seed=0)
    ds = generate(cfg)
    assert ds.states.shape == (2, 501, 4)
    assert np.all(np.isfinite(ds.states))


def test_generation_is_bitwise_reproducible(tmp_path, pendulum_config):
    a, b = tmp_path / "a.nvds", tmp_path / "b.nvds"
    save(generate(pendulum_config), str(a))
    save(generate(pendulum_config), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_workers_do_not_change_generated_data(pendulum_config):
    np.testing.assert_array_equal(generate(pendulum_config).states, generate(pendulum_config, workers=2).states)


def test_unstable_generation_fails_fast():
    cfg = DatasetConfig(system="spring-chain", count=2, delta=0.2, scheme="euler",
                        duration=40.0, eta=0.2, seed=0)
    with pytest.raises(Divergence):
        generate(cfg)


# ── Persistence ─────────────────────────────────────────────────────────


def test_round_trip(tmp_path, pendulum_config):
    ds = generate(pendulum_config)
    path = tmp_path / "set.nvds"
    checksum = save(ds, str(path))
    back = load(str(path))
    assert back.config == ds.config
    np.testing.assert_array_equal(back.states, ds.states)
    np.testing.assert_array_equal(back.times, ds.times)
    np.testing.assert_array_equal(back.indices, ds.indices)
    assert dataset_checksum(str(path)) == checksum


def test_model_file_is_not_a_dataset(tmp_path, small_model):
    path = tmp_path / "model.nvec"
    save_model(small_model, str(path))
    with pytest.raises(BadMagic):
        load(str(path))


# ── Split ───────────────────────────────────────────────────────────────


def test_split_partitions_whole_trajectories(oscillator_dataset):
    first, second = split(oscillator_dataset, 0.5, seed=4)
    assert first.count == 3 and second.count == 3
    assert sorted(np.concatenate([first.indices, second.indices]).tolist()) == list(range(6))
    for part in (first, second):
        for row, idx in enumerate(part.indices):
            np.testing.assert_array_equal(part.states[row], oscillator_dataset.states[idx])
    assert first.config.provenance["split_seed"] == 4
    assert second.config.provenance["split_part"] == 1


def test_split_is_deterministic(oscillator_dataset):
    a, _ = split(oscillator_dataset, 0.5, seed=1)
    b, _ = split(oscillator_dataset, 0.5, seed=1)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_split_rejects_empty_side(oscillator_dataset):
    with pytest.raises(EmptySplit):
        split(oscillator_dataset, 0.01, seed=0)
    with pytest.raises(InvalidConfigError):
        split(oscillator_dataset, 1.0, seed=0)


# ── Describe ────────────────────────────────────────────────────────────


def test_describe_dataset(tmp_path, pendulum_config):
    path = tmp_path / "set.nvds"
    checksum = save(generate(pendulum_config), str(path))
    summary = describe(str(path))
    assert summary["kind"] == "trajectory-dataset"
    assert summary["trajectories"] == 4
    assert summary["samples_per_trajectory"] == 11
    assert summary["checksum"] == f"{checksum:016x}"
    assert summary["time_range"] == pytest.approx([0.0, 1.0])
    text = format_description(str(path), summary)
    assert "trajectory-dataset" in text and "k-link-pendulum" in text


def test_describe_model(tmp_path, small_model):
    path = tmp_path / "model.nvec"
    save_model(small_model, str(path))
    summary = describe(str(path))
    assert summary["kind"] == "neurvec-model"
    assert summary["width"] == 8
    assert summary["meta"]["scheme"] == "euler"


def test_describe_unknown_file(tmp_path):
    path = tmp_path / "notes.txt"
    path.write_text("hello world")
    with pytest.raises(BadMagic):
        describe(str(path))

import json

import numpy as np
import pytest
import yaml

import main
from container import file_digest
from datasets import load
from errors import exit_code_table
from evaluation import energy_error_curve
from ode_systems import make_system
from runlog import load_manifest

QUIET = ["--log-level", "WARNING"]

RUN_CONFIG = {
    "dataset": {
        "system": "k-link-pendulum", "params": {"links": 1}, "count": 8, "delta": 0.01,
        "scheme": "rk4", "duration": 1.0, "eta": 0.1, "seed": 1,
    },
    "train": {"scheme": "euler", "k": 10, "epochs": 2, "batch_size": 16, "width": 8, "seed": 0},
    "simulate": {"scheme": "euler", "dt": 0.1},
    "bench": {"scheme": "euler", "fine_dt": 0.01, "coarse_dt": 0.1, "trials": 2, "pause": 0},
    "error_map": {"nodes": 4},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """generate → train → simulate once, shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.yaml"
    cfg.write_text(yaml.safe_dump(RUN_CONFIG))
    common = ["--config", str(cfg), *QUIET]
    assert main.run(["generate", *common, "--out", str(root / "gen")]) == 0
    assert main.run(["train", *common, "--dataset", str(root / "gen" / "dataset.nvds"),
                     "--out", str(root / "train")]) == 0
    assert main.run(["simulate", *common, "--reference", str(root / "gen" / "dataset.nvds"),
                     "--model", str(root / "train" / "model.nvec"), "--out", str(root / "sim")]) == 0
    return root, common


def test_generate_writes_dataset_and_manifest(pipeline):
    root, _ = pipeline
    manifest = load_manifest(root / "gen")
    assert manifest["verb"] == "generate"
    assert manifest["details"]["seeds"] == {"dataset": 1}
    assert manifest["outputs"]["dataset"]["blake2b"] == file_digest(root / "gen" / "dataset.nvds")
    assert (root / "gen" / "manifest.txt").read_text().startswith("Run manifest: generate")


def test_train_outputs(pipeline):
    root, _ = pipeline
    report = json.loads((root / "train" / "training_report.json").read_text())
    assert len(report["epoch_losses"]) == 2
    assert report["pairs"] == 80
    assert (root / "train" / "losses.txt").read_text().splitlines()[0] == "epoch loss"
    meta = load_manifest(root / "train")["details"]["model_meta"]
    assert (meta["system"], meta["scheme"], meta["k"]) == ("k-link-pendulum", "euler", 10)


def test_simulation_keeps_reference_indices(pipeline):
    root, _ = pipeline
    sim = load(str(root / "sim" / "simulation.nvds"))
    ref = load(str(root / "gen" / "dataset.nvds"))
    assert sim.config.role == "simulation"
    assert sim.config.provenance["corrected"] is True
    assert sim.states.shape == ref.states.shape
    assert (sim.states[:, 0] == ref.states[:, 0]).all()


def test_evaluate(pipeline):
    root, common = pipeline
    out = root / "eval"
    assert main.run(["evaluate", *common, "--pred", str(root / "sim" / "simulation.nvds"),
                     "--reference", str(root / "gen" / "dataset.nvds"), "--mse", "--histogram",
                     "--out", str(out)]) == 0
    summary = json.loads((out / "evaluation.json").read_text())
    assert summary["mse"][0]["mean_of_mean"] >= 0.0
    assert (out / "mse.txt").exists()
    assert (out / "histogram_pred.txt").exists() and (out / "histogram_reference.txt").exists()


def test_evaluate_threshold_violation(pipeline, capsys):
    root, common = pipeline
    out = root / "eval-strict"
    code = main.run(["evaluate", *common, "--pred", str(root / "sim" / "simulation.nvds"),
                     "--reference", str(root / "gen" / "dataset.nvds"),
                     "--set", "evaluate.max_mean_mse=-1", "--out", str(out)])
    assert code == 50
    assert "error: threshold_violation:" in capsys.readouterr().err
    assert load_manifest(out)["details"]["threshold_violations"]


def test_error_map(pipeline):
    root, common = pipeline
    out = root / "emap"
    assert main.run(["error-map", *common, "--model", str(root / "train" / "model.nvec"), "--out", str(out)]) == 0
    lines = (out / "error_map.txt").read_text().splitlines()
    assert lines[0] == "theta omega R_EL R_NV R_Diff"
    assert len(lines) == 1 + 16


def test_bench(pipeline):
    root, common = pipeline
    out = root / "bench"
    assert main.run(["bench", *common, "--reference", str(root / "gen" / "dataset.nvds"),
                     "--model", str(root / "train" / "model.nvec"), "--out", str(out)]) == 0
    report = json.loads((out / "bench.json").read_text())
    assert [c["role"] for c in report["cases"]] == ["fine", "coarse", "corrector"]
    assert "speedup" in report["groups"]["euler"]


def test_evaluate_energy_window_uses_initial_energy(tmp_path):
    cfg = tmp_path / "hh.yaml"
    cfg.write_text(yaml.safe_dump({
        "dataset": {"system": "henon-heiles", "count": 3, "delta": 0.1, "scheme": "rk4",
                    "duration": 2.0, "eta": 0.5, "seed": 4},
        "simulate": {"scheme": "euler", "dt": 0.5},
    }))
    common = ["--config", str(cfg), *QUIET]
    assert main.run(["generate", *common, "--out", str(tmp_path / "gen")]) == 0
    assert main.run(["simulate", *common, "--reference", str(tmp_path / "gen" / "dataset.nvds"),
                     "--out", str(tmp_path / "sim")]) == 0
    sim_path = tmp_path / "sim" / "simulation.nvds"
    assert main.run(["evaluate", *common, "--pred", str(sim_path),
                     "--reference", str(tmp_path / "gen" / "dataset.nvds"), "--energy",
                     "--set", "evaluate.window=[1.0, 2.0]", "--out", str(tmp_path / "eval")]) == 0

    table = np.loadtxt(tmp_path / "eval" / "energy_1_2.txt", skiprows=1)
    sim = load(str(sim_path))
    expected = energy_error_curve(sim.as_trajectory(), make_system("henon-heiles")).window(1.0, 2.0)
    np.testing.assert_allclose(table[:, 0], [1.0, 1.5, 2.0])
    assert table[0, 1] > 0.0
    np.testing.assert_allclose(table[:, 1], expected.mean, rtol=1e-15)
    summary = json.loads((tmp_path / "eval" / "evaluation.json").read_text())
    assert summary["energy"][0]["window"] == [1.0, 2.0]


def test_describe(pipeline, capsys):
    root, common = pipeline
    assert main.run(["describe", *common, "--file", str(root / "gen" / "dataset.nvds"),
                     "--out", str(root / "describe")]) == 0
    assert "trajectory-dataset" in capsys.readouterr().out


def test_replay_reproduces_outputs(pipeline):
    root, _ = pipeline
    assert main.run(["replay", "--file", str(root / "gen" / "manifest.json"), *QUIET]) == 0
    original = load_manifest(root / "gen")
    replayed = load_manifest(root / "gen-replay")
    assert replayed["outputs"]["dataset"]["blake2b"] == original["outputs"]["dataset"]["blake2b"]


def test_step_size_mismatch(pipeline):
    root, common = pipeline
    code = main.run(["simulate", *common, "--reference", str(root / "gen" / "dataset.nvds"),
                     "--model", str(root / "train" / "model.nvec"),
                     "--set", "simulate.dt=0.2", "--set", "simulate.eta=0.2", "--out", str(root / "bad-sim")])
    assert code == 21


def test_corrupt_file_is_rejected(pipeline, tmp_path):
    root, common = pipeline
    copy = tmp_path / "copy.nvds"
    data = bytearray((root / "gen" / "dataset.nvds").read_bytes())
    data[-12] ^= 0x01
    copy.write_bytes(bytes(data))
    assert main.run(["describe", *QUIET, "--file", str(copy), "--out", str(tmp_path / "d")]) == 32


def test_missing_input(tmp_path, capsys):
    code = main.run(["train", *QUIET, "--dataset", str(tmp_path / "none.nvds"),
                     "--set", "train.scheme=rk4", "--set", "train.k=10", "--out", str(tmp_path / "t")])
    assert code == 3
    assert "error: missing_input:" in capsys.readouterr().err


def test_missing_config_keys(tmp_path):
    assert main.run(["generate", *QUIET, "--out", str(tmp_path / "g")]) == 3


def test_unknown_preset(tmp_path):
    assert main.run(["generate", *QUIET, "--preset", "nope", "--out", str(tmp_path / "g")]) == 4


def test_preset_with_seed_and_scale(tmp_path):
    out = tmp_path / "g"
    assert main.run(["generate", *QUIET, "--preset", "1-link-pendulum-train", "--scale", "0.002",
                     "--seed", "7", "--set", "dataset.duration=1", "--out", str(out)]) == 0
    ds = load(str(out / "dataset.nvds"))
    assert ds.count == 2
    assert ds.config.seed == 7


def test_list_presets(capsys):
    assert main.run(["--list"]) == 0
    assert "elastic-pendulum-train" in capsys.readouterr().out


def test_help_lists_every_exit_code():
    epilog = main._exit_code_epilog()
    for code, category in exit_code_table():
        assert f"{code:<4} {category}" in epilog

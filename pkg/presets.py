"""
Named run presets.

Dataset presets reproduce the generation protocol of each benchmark row
(system, δ, scheme, T, η and the full trajectory count).  Counts are
multiplied by ``--scale`` (default 0.01) so desk runs keep every other
number exact.  Recipe presets bundle the sections one experiment needs:
training set, training hyper-parameters, coarse simulation step, metric
windows and benchmark steps.
"""

import copy
import math
from typing import Any

from config import DEFAULT_SCALE

TRAIN_SEED = 1
TEST_SEED = 2

# η per system doubles as the coarse step kΔt of its corrector.
_SPRING_ETA = 0.2
_PENDULUM_ETA = 0.1
_HH_ETA = 0.5


def _dataset(system: str, role: str, count: int, delta: float, scheme: str,
             duration: float, eta: float, params: dict | None = None) -> dict[str, Any]:
    return {
        "system": system,
        "role": role,
        "count": count,
        "delta": delta,
        "scheme": scheme,
        "duration": duration,
        "eta": eta,
        "seed": TRAIN_SEED if role == "train" else TEST_SEED,
        "params": params or {},
    }


PRESETS: list[dict] = [
    # ── Spring-chain (d = 20, state dim 40) ─────────────────────────────
    *[
        {
            "id": f"spring-chain-train-{scheme}",
            "name": f"Spring-chain training set ({scheme})",
            "description": "60k trajectories generated with the scheme the corrector is trained for",
            "config": {
                "dataset": _dataset("spring-chain", "train", 60_000, 1e-3, scheme, 20.0, _SPRING_ETA),
                "train": {"scheme": scheme, "k": 200},
            },
        }
        for scheme in ("euler", "improved-euler", "rk3", "rk4")
    ],
    {
        "id": "spring-chain-test",
        "name": "Spring-chain reference test set",
        "description": "10.5k RK4 trajectories at δ=1e-4",
        "config": {
            "dataset": _dataset("spring-chain", "test", 10_500, 1e-4, "rk4", 20.0, _SPRING_ETA),
        },
    },

    # ── Pendulums ───────────────────────────────────────────────────────
    {
        "id": "1-link-pendulum-train",
        "name": "1-link pendulum training set",
        "description": "1k trajectories; the Euler corrector behind the phase-space error map",
        "config": {
            "dataset": _dataset("k-link-pendulum", "train", 1_000, 1e-3, "rk4", 10.0,
                                _PENDULUM_ETA, {"links": 1}),
            "train": {"scheme": "euler", "k": 100},
        },
    },
    {
        "id": "2-link-pendulum-train",
        "name": "2-link pendulum training set",
        "description": "300k RK4 trajectories at δ=1e-3",
        "config": {
            "dataset": _dataset("k-link-pendulum", "train", 300_000, 1e-3, "rk4", 10.0,
                                _PENDULUM_ETA, {"links": 2}),
            "train": {"scheme": "rk4", "k": 100},
        },
    },
    {
        "id": "2-link-pendulum-test",
        "name": "2-link pendulum reference test set",
        "description": "7k RK4 trajectories at δ=1e-4",
        "config": {
            "dataset": _dataset("k-link-pendulum", "test", 7_000, 1e-4, "rk4", 10.0,
                                _PENDULUM_ETA, {"links": 2}),
        },
    },
    {
        "id": "elastic-pendulum-train",
        "name": "Elastic pendulum training set",
        "description": "300k RK4 trajectories at δ=1e-3",
        "config": {
            "dataset": _dataset("elastic-pendulum", "train", 300_000, 1e-3, "rk4", 50.0, _PENDULUM_ETA),
            "train": {"scheme": "rk4", "k": 100},
        },
    },
    {
        "id": "elastic-pendulum-test",
        "name": "Elastic pendulum reference test set",
        "description": "14k RK4 trajectories at δ=1e-4",
        "config": {
            "dataset": _dataset("elastic-pendulum", "test", 14_000, 1e-4, "rk4", 50.0, _PENDULUM_ETA),
        },
    },

    # ── Hénon–Heiles ────────────────────────────────────────────────────
    {
        "id": "henon-heiles-train",
        "name": "Hénon–Heiles training set",
        "description": "100k RK4 trajectories at δ=1e-3, energies in [1/12, 1/6]",
        "config": {
            "dataset": _dataset("henon-heiles", "train", 100_000, 1e-3, "rk4", 50.0, _HH_ETA),
            "train": {"scheme": "rk4", "k": 500},
        },
    },
    {
        "id": "henon-heiles-test",
        "name": "Hénon–Heiles reference test set",
        "description": "70k RK4 trajectories at δ=1e-4",
        "config": {
            "dataset": _dataset("henon-heiles", "test", 70_000, 1e-4, "rk4", 50.0, _HH_ETA),
        },
    },

    # ── Experiment recipes ──────────────────────────────────────────────
    *[
        {
            "id": f"stability-{scheme}",
            "name": f"Spring-chain stability rescue ({scheme})",
            "description": "Coarse step 2e-1 with and without the corrector against the RK4 reference on [0, 17]",
            "config": {
                "dataset": _dataset("spring-chain", "train", 60_000, 1e-3, scheme, 20.0, _SPRING_ETA),
                "train": {"scheme": scheme, "k": 200},
                "simulate": {"scheme": scheme, "dt": _SPRING_ETA, "duration": 17.0},
                "evaluate": {"window": [0.0, 17.0]},
                "bench": {"scheme": scheme, "fine_dt": 1e-3, "coarse_dt": _SPRING_ETA, "duration": 17.0},
            },
        }
        for scheme in ("euler", "improved-euler", "rk3", "rk4")
    ],
    {
        "id": "long-horizon",
        "name": "Spring-chain long-horizon error",
        "description": "MSE on [180, 200] and [570, 600] against an RK4 reference integrated to T=600",
        "config": {
            "dataset": _dataset("spring-chain", "train", 60_000, 1e-3, "rk4", 20.0, _SPRING_ETA),
            "train": {"scheme": "rk4", "k": 200},
            "simulate": {"scheme": "rk4", "dt": _SPRING_ETA},
            "evaluate": {"windows": [[180.0, 200.0], [570.0, 600.0]]},
        },
    },
    {
        "id": "henon-heiles-energy",
        "name": "Hénon–Heiles accuracy and energy",
        "description": "Corrector at 5e-1 against RK4 at 1e-3; MSE on [0, 42.5], energy error on [0, 50]",
        "config": {
            "dataset": _dataset("henon-heiles", "train", 100_000, 1e-3, "rk4", 50.0, _HH_ETA),
            "train": {"scheme": "rk4", "k": 500},
            "simulate": {"scheme": "rk4", "dt": _HH_ETA},
            "evaluate": {"window": [0.0, 42.5], "energy": True},
            "bench": {"scheme": "rk4", "fine_dt": 1e-3, "coarse_dt": _HH_ETA},
        },
    },
    {
        "id": "elastic-accuracy",
        "name": "Elastic pendulum accuracy and speed",
        "description": "Corrector at 1e-1 against RK4 at 1e-3; MSE on [0, 8.5] and [25, 50]",
        "config": {
            "dataset": _dataset("elastic-pendulum", "train", 300_000, 1e-3, "rk4", 50.0, _PENDULUM_ETA),
            "train": {"scheme": "rk4", "k": 100},
            "simulate": {"scheme": "rk4", "dt": _PENDULUM_ETA},
            "evaluate": {"window": [0.0, 8.5], "windows": [[25.0, 50.0]]},
            "bench": {"scheme": "rk4", "fine_dt": 1e-3, "coarse_dt": _PENDULUM_ETA},
        },
    },
    {
        "id": "2-link-accuracy",
        "name": "2-link pendulum accuracy and speed",
        "description": "Corrector at 1e-1 against RK4 at 1e-3 on [0, 8.5]",
        "config": {
            "dataset": _dataset("k-link-pendulum", "train", 300_000, 1e-3, "rk4", 10.0,
                                _PENDULUM_ETA, {"links": 2}),
            "train": {"scheme": "rk4", "k": 100},
            "simulate": {"scheme": "rk4", "dt": _PENDULUM_ETA},
            "evaluate": {"window": [0.0, 8.5]},
            "bench": {"scheme": "rk4", "fine_dt": 1e-3, "coarse_dt": _PENDULUM_ETA},
        },
    },
    {
        "id": "histograms",
        "name": "Time-series histograms",
        "description": "800x100 curve-crossing histograms of the elastic pendulum radial velocity",
        "config": {
            "evaluate": {"histogram": True, "variable": 3},
        },
    },
    {
        "id": "1-link-error-map",
        "name": "1-link pendulum error map",
        "description": "Leading Euler error against the learned correction on [0, π/2] x [0, 0.5]",
        "config": {
            "dataset": _dataset("k-link-pendulum", "train", 1_000, 1e-3, "rk4", 10.0,
                                _PENDULUM_ETA, {"links": 1}),
            "train": {"scheme": "euler", "k": 100},
            "error_map": {"theta_max": math.pi / 2, "omega_max": 0.5, "nodes": 64},
        },
    },
]


def get_preset(preset_id: str) -> dict | None:
    """Look up a preset by its ID."""
    for preset in PRESETS:
        if preset["id"] == preset_id:
            return preset
    return None


def list_preset_ids() -> list[str]:
    return [p["id"] for p in PRESETS]


def scaled_count(count: int, scale: float) -> int:
    return max(1, int(round(count * scale)))


def preset_config(preset_id: str, scale: float = DEFAULT_SCALE) -> dict[str, Any] | None:
    """The preset's config sections with the dataset count multiplied by ``scale``."""
    preset = get_preset(preset_id)
    if preset is None:
        return None
    cfg = copy.deepcopy(preset["config"])
    if "dataset" in cfg:
        cfg["dataset"]["count"] = scaled_count(cfg["dataset"]["count"], scale)
    return cfg

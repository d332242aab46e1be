#!/usr/bin/env python3
"""
NeurVec simulation toolkit — command-line entry point.

Verbs:
  generate   integrate a trajectory dataset from a dataset config
  train      fit a corrector on a training dataset
  simulate   integrate a reference set's initial states, plain or corrected
  evaluate   MSE / energy-error curves and time-series histograms
  bench      wall-clock timing of fine, coarse and corrected integration
  error-map  learned correction against the leading Euler error (1-link pendulum)
  describe   print a dataset or model file's header and checksum
  replay     re-run a previous run from its manifest alone

Usage:
    python main.py generate --preset elastic-pendulum-train --scale 0.01 --seed 7
    python main.py train --preset elastic-pendulum-train --dataset runs/.../dataset.nvds
    python main.py --list
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

import config as settings
from config import (
    DEFAULT_SCALE,
    apply_overrides,
    deep_merge,
    empty_config,
    get_key,
    load_config_file,
    missing_keys,
    set_key,
)
from errors import InvalidConfigError, MissingInputError, NeurVecError, ThresholdViolation, exit_code_table

logger = logging.getLogger("neurvec")

VERBS = ("generate", "train", "simulate", "evaluate", "bench", "error-map", "describe", "replay")

# Dedicated flags and the config key each one sets.
INPUT_FLAGS = {
    "dataset": "inputs.dataset",
    "model": "inputs.model",
    "reference": "inputs.reference",
    "pred": "inputs.pred",
    "file": "inputs.file",
}
SEED_KEYS = {"generate": "dataset.seed", "train": "train.seed"}


# ── Parser ──────────────────────────────────────────────────────────────


def _exit_code_epilog() -> str:
    lines = ["exit codes:", "  0    success", "  1    unexpected internal error"]
    lines += [f"  {code:<4} {category}" for code, category in exit_code_table()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override one config value (repeatable)")
    common.add_argument("--preset", help="Named preset providing the base config (see --list)")
    common.add_argument("--scale", type=float, default=None,
                        help=f"Multiplier on preset trajectory counts (default: {DEFAULT_SCALE})")
    common.add_argument("--seed", type=int, help="Seed for generate / train")
    common.add_argument("--out", help="Output directory (default: $NEURVEC_OUTPUT_DIR/<preset>/<verb>)")
    common.add_argument("--workers", type=int, default=None,
                        help="Worker threads for batch integration (default: $NEURVEC_WORKERS)")
    common.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    for flag in INPUT_FLAGS:
        common.add_argument(f"--{flag}", help=f"Path for {INPUT_FLAGS[flag]}")

    parser = argparse.ArgumentParser(
        description="Batched fixed-step ODE simulation with a learned NeurVec corrector",
        epilog=_exit_code_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--list", action="store_true", help="List available presets and exit")
    sub = parser.add_subparsers(dest="verb", metavar="VERB")
    for verb in VERBS:
        p = sub.add_parser(verb, parents=[common], epilog=_exit_code_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        if verb == "evaluate":
            p.add_argument("--mse", action="store_true", help="MSE-vs-time curve(s)")
            p.add_argument("--energy", action="store_true", help="Energy-error curve")
            p.add_argument("--histogram", action="store_true", help="Time-series histograms")
    return parser


# ── Config resolution ───────────────────────────────────────────────────


def resolve_config(args: argparse.Namespace) -> dict:
    """preset → YAML file → --set overrides → dedicated flags."""
    from presets import list_preset_ids, preset_config

    cfg = empty_config()
    if args.preset:
        scale = DEFAULT_SCALE if args.scale is None else args.scale
        if not scale > 0:
            raise InvalidConfigError(f"--scale must be > 0, got {scale}")
        preset = preset_config(args.preset, scale)
        if preset is None:
            raise InvalidConfigError(
                f"unknown preset {args.preset!r}; available: {', '.join(list_preset_ids())}"
            )
        cfg = deep_merge(cfg, preset)
    if args.config:
        cfg = deep_merge(cfg, load_config_file(args.config))
    cfg = apply_overrides(cfg, args.set)

    for flag, key in INPUT_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            set_key(cfg, key, value)
    if args.seed is not None and args.verb in SEED_KEYS:
        set_key(cfg, SEED_KEYS[args.verb], args.seed)
    if args.verb == "evaluate":
        for metric in ("mse", "energy", "histogram"):
            if getattr(args, metric, False):
                set_key(cfg, f"evaluate.{metric}", True)
    return cfg


def _require_file(cfg: dict, key: str) -> str:
    path = get_key(cfg, key)
    if path is None or not Path(path).is_file():
        raise MissingInputError(f"{key}: file not found: {path}")
    return str(path)


def _optional_float(cfg: dict, key: str) -> float | None:
    value = get_key(cfg, key)
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"{key} must be a number, got {value!r}") from exc


def _float(cfg: dict, key: str) -> float:
    value = _optional_float(cfg, key)
    if value is None:
        raise MissingInputError(f"missing required config key {key}")
    return value


def _check(violations: list[str], label: str, value: float, limit: float | None, upper: bool = True) -> None:
    if limit is None:
        return
    ok = value <= limit if upper else value >= limit
    if not ok:
        op = "<=" if upper else ">="
        violations.append(f"{label} = {value:.6g}, required {op} {limit:.6g}")


# ── Verbs ───────────────────────────────────────────────────────────────
#
# Each handler writes its outputs under ``out``, records them in the
# manifest and returns the list of violated thresholds.


def cmd_generate(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from datasets import DATASET_FORMAT_VERSION, DatasetConfig, generate, save

    ds_cfg = DatasetConfig.from_mapping(cfg["dataset"])
    dataset = generate(ds_cfg, workers=workers)
    path = out / "dataset.nvds"
    checksum = save(dataset, str(path))
    manifest.add_output("dataset", path)
    manifest.record("seeds", {"dataset": ds_cfg.seed})
    manifest.record("format_versions", {"dataset": DATASET_FORMAT_VERSION})
    manifest.record("checksum", f"{checksum:016x}")
    return []


def cmd_train(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from datasets import load, split
    from evaluation import write_table
    from neurvec import (
        MODEL_FORMAT_VERSION,
        TrainConfig,
        build_training_pairs,
        mean_loss,
        save_model,
        train,
    )
    from ode_systems import make_system
    from runlog import write_json
    from solvers import parse_scheme

    path = _require_file(cfg, "inputs.dataset")
    manifest.add_input("dataset", path)
    dataset = load(path)
    section = cfg["train"]
    scheme = parse_scheme(section["scheme"])
    k = int(section["k"])
    seed = int(section.get("seed", 0))
    train_cfg = TrainConfig.from_mapping(section)
    system = make_system(dataset.config.system, dataset.config.params)

    holdout = _optional_float(cfg, "train.holdout")
    validation = None
    if holdout:
        dataset, held = split(dataset, 1.0 - holdout, seed)
        validation = build_training_pairs(held, scheme, system, k, normalize=train_cfg.normalize_targets)

    pairs = build_training_pairs(dataset, scheme, system, k, normalize=train_cfg.normalize_targets)
    model, report = train(pairs, train_cfg, seed)

    model_path = out / "model.nvec"
    checksum = save_model(model, str(model_path))
    manifest.add_output("model", model_path)

    summary = report.to_dict()
    if validation is not None:
        summary["validation_loss"] = mean_loss(model, validation.inputs, validation.targets)
        summary["validation_pairs"] = len(validation)
        logger.info("Validation loss %.3e on %d held-out pairs", summary["validation_loss"], len(validation))
    manifest.add_output("report", write_json(out / "training_report.json", summary))
    epochs = np.arange(1, len(report.epoch_losses) + 1)
    manifest.add_output("losses", write_table(out / "losses.txt", {"epoch": epochs, "loss": np.asarray(report.epoch_losses)}))

    manifest.record("seeds", {"train": seed, "dataset": dataset.config.seed})
    manifest.record("format_versions", {"model": MODEL_FORMAT_VERSION})
    manifest.record("model_meta", model.meta.to_dict())
    manifest.record("checksum", f"{checksum:016x}")
    return []


def cmd_simulate(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from datasets import DATASET_FORMAT_VERSION, DatasetConfig, TrajectoryDataset, load, save
    from neurvec import load_model, model_checksum
    from ode_systems import make_system
    from solvers import IntegrationPlan, integrate, integrate_with_corrector, parse_scheme

    ref_path = _require_file(cfg, "inputs.reference")
    manifest.add_input("reference", ref_path)
    reference = load(ref_path)
    rc = reference.config
    system = make_system(rc.system, rc.params)
    scheme = parse_scheme(cfg["simulate"]["scheme"])
    dt = _float(cfg, "simulate.dt")
    duration = _optional_float(cfg, "simulate.duration") or rc.duration
    eta = _optional_float(cfg, "simulate.eta") or rc.eta
    plan = IntegrationPlan.covering(dt, duration, eta)

    provenance: dict[str, Any] = {"reference_seed": rc.seed, "corrected": False}
    if get_key(cfg, "inputs.model"):
        model_path = _require_file(cfg, "inputs.model")
        manifest.add_input("model", model_path)
        model = load_model(model_path)
        provenance.update(corrected=True, model_checksum=f"{model_checksum(model_path):016x}")
        traj = integrate_with_corrector(scheme, system, model, reference.initial_states(), plan, workers=workers)
    else:
        traj = integrate(scheme, system, reference.initial_states(), plan, workers=workers)

    sim_cfg = DatasetConfig(
        system=rc.system, params=rc.params, role="simulation", count=rc.count,
        delta=dt, scheme=scheme.value, duration=plan.horizon, eta=plan.eta,
        seed=rc.seed, provenance=provenance,
    )
    simulated = TrajectoryDataset.from_trajectory(sim_cfg, traj)
    simulated.indices = reference.indices.copy()
    path = out / "simulation.nvds"
    save(simulated, str(path))
    manifest.add_output("simulation", path)
    manifest.record("format_versions", {"dataset": DATASET_FORMAT_VERSION})
    return []


def _windows(cfg: dict) -> list[tuple[float, float] | None]:
    windows: list[tuple[float, float] | None] = []
    single = get_key(cfg, "evaluate.window")
    if single is not None:
        windows.append((float(single[0]), float(single[1])))
    for w in get_key(cfg, "evaluate.windows") or []:
        windows.append((float(w[0]), float(w[1])))
    return windows or [None]


def cmd_evaluate(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from datasets import load
    from evaluation import (
        default_value_range,
        energy_error_curve,
        mse_curve,
        time_series_histogram,
        write_table,
    )
    from ode_systems import make_system
    from runlog import write_json

    pred_path = _require_file(cfg, "inputs.pred")
    ref_path = _require_file(cfg, "inputs.reference")
    manifest.add_input("pred", pred_path)
    manifest.add_input("reference", ref_path)
    pred_ds, ref_ds = load(pred_path), load(ref_path)
    pred, ref = pred_ds.as_trajectory(), ref_ds.as_trajectory()

    section = cfg.get("evaluate", {})
    do_mse = bool(section.get("mse"))
    do_energy = bool(section.get("energy"))
    do_hist = bool(section.get("histogram"))
    if not (do_mse or do_energy or do_hist):
        do_mse = True

    summary: dict[str, Any] = {}
    violations: list[str] = []
    windows = _windows(cfg)

    if do_mse:
        summary["mse"] = []
        for window in windows:
            p, r = (pred, ref) if window is None else (pred.window(*window), ref.window(*window))
            curve = mse_curve(p, r)
            name = "mse.txt" if window is None else f"mse_{window[0]:g}_{window[1]:g}.txt"
            manifest.add_output(name, write_table(out / name, curve.columns()))
            summary["mse"].append({"window": window, **curve.summary()})
        _check(violations, "mean MSE", summary["mse"][0]["mean_of_mean"], _optional_float(cfg, "evaluate.max_mean_mse"))

    if do_energy:
        system = make_system(pred_ds.config.system, pred_ds.config.params)
        # Baseline is H(u(0)) for every window.
        full = energy_error_curve(pred, system)
        summary["energy"] = []
        for window in windows:
            curve = full if window is None else full.window(*window)
            name = "energy.txt" if window is None else f"energy_{window[0]:g}_{window[1]:g}.txt"
            manifest.add_output(name, write_table(out / name, curve.columns()))
            summary["energy"].append({"window": window, **curve.summary()})
        _check(violations, "mean energy error", summary["energy"][0]["mean_of_mean"],
               _optional_float(cfg, "evaluate.max_energy_error"))

    if do_hist:
        variable = int(section.get("variable", 0))
        value_range = section.get("value_range")
        value_range = tuple(float(v) for v in value_range) if value_range else default_value_range(ref, variable)
        summary["histogram"] = {"variable": variable, "value_range": list(value_range)}
        for label, traj in (("pred", pred), ("reference", ref)):
            grid = time_series_histogram(traj, variable, value_range)
            name = f"histogram_{label}.txt"
            manifest.add_output(name, write_table(out / name, grid.columns()))

    manifest.add_output("summary", write_json(out / "evaluation.json", summary))
    manifest.record("summary", summary)
    return violations


def cmd_bench(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from bench import BenchCase, benchmark
    from datasets import load
    from evaluation import write_table
    from neurvec import load_model
    from ode_systems import make_system
    from runlog import write_json
    from solvers import IntegrationPlan, parse_scheme

    ref_path = _require_file(cfg, "inputs.reference")
    manifest.add_input("reference", ref_path)
    reference = load(ref_path)
    system = make_system(reference.config.system, reference.config.params)
    section = cfg["bench"]
    scheme = parse_scheme(section["scheme"])
    fine_dt = _float(cfg, "bench.fine_dt")
    coarse_dt = _float(cfg, "bench.coarse_dt")
    duration = _optional_float(cfg, "bench.duration") or reference.config.duration
    init = reference.initial_states()

    # Every role records at the coarse step so output volume is equal.
    fine_plan = IntegrationPlan.covering(fine_dt, duration, coarse_dt)
    coarse_plan = IntegrationPlan.covering(coarse_dt, duration, coarse_dt)
    group = scheme.value
    cases = [
        BenchCase(f"{group}@{fine_dt:g}", group, "fine", scheme, system, init, fine_plan),
        BenchCase(f"{group}@{coarse_dt:g}", group, "coarse", scheme, system, init, coarse_plan),
    ]
    if get_key(cfg, "inputs.model"):
        model_path = _require_file(cfg, "inputs.model")
        manifest.add_input("model", model_path)
        model = load_model(model_path)
        cases.append(BenchCase(f"{group}+neurvec@{coarse_dt:g}", group, "corrector",
                               scheme, system, init, coarse_plan, model))

    report = benchmark(
        cases,
        trials=int(section.get("trials", 70)),
        pause=float(section.get("pause", 10.0)),
        workers=workers,
    )
    payload = report.to_dict()
    manifest.add_output("report", write_json(out / "bench.json", payload))
    manifest.add_output("table", write_table(out / "bench.txt", report.columns()))
    manifest.record("groups", report.groups)

    violations: list[str] = []
    stats = report.groups.get(group, {})
    if "speedup" in stats:
        _check(violations, "speedup", stats["speedup"], _optional_float(cfg, "bench.min_speedup"), upper=False)
    if "epsilon" in stats:
        _check(violations, "epsilon", stats["epsilon"], _optional_float(cfg, "bench.max_epsilon"))
    return violations


def cmd_error_map(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from evaluation import ErrorGridSpec, error_map, write_table
    from neurvec import load_model
    from runlog import write_json

    model_path = _require_file(cfg, "inputs.model")
    manifest.add_input("model", model_path)
    model = load_model(model_path)
    section = cfg.get("error_map", {})
    spec = ErrorGridSpec(
        theta_min=float(section.get("theta_min", 0.0)),
        theta_max=float(section.get("theta_max", math.pi / 2)),
        omega_min=float(section.get("omega_min", 0.0)),
        omega_max=float(section.get("omega_max", 0.5)),
        nodes=int(section.get("nodes", 64)),
    )
    result = error_map(model, spec)
    summary = result.summary()
    manifest.add_output("error_map", write_table(out / "error_map.txt", result.columns()))
    manifest.add_output("summary", write_json(out / "error_map.json", summary))
    manifest.record("summary", summary)

    violations: list[str] = []
    _check(violations, "median R_Diff", summary["median_r_diff"], _optional_float(cfg, "error_map.max_median_rdiff"))
    _check(violations, "median R_Diff / median R_EL", summary["rdiff_ratio"],
           _optional_float(cfg, "error_map.max_rdiff_ratio"))
    return violations


def cmd_describe(cfg: dict, out: Path, manifest, workers: int) -> list[str]:
    from datasets import describe, format_description

    path = _require_file(cfg, "inputs.file")
    manifest.add_input("file", path)
    summary = describe(path)
    print(format_description(path, summary))
    manifest.record("summary", summary)
    return []


HANDLERS: dict[str, Callable[[dict, Path, Any, int], list[str]]] = {
    "generate": cmd_generate,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "error-map": cmd_error_map,
    "describe": cmd_describe,
}


# ── Driver ──────────────────────────────────────────────────────────────


def execute(verb: str, cfg: dict, out: Path, argv: list[str], workers: int) -> str:
    """Run one verb with a fully resolved config; returns the manifest path."""
    from runlog import RunManifest

    missing = missing_keys(cfg, verb)
    if missing:
        raise MissingInputError(f"{verb} needs config key(s): {', '.join(missing)}")
    manifest = RunManifest(verb, argv, cfg, out, workers=workers)
    violations = HANDLERS[verb](cfg, out, manifest, workers)
    if violations:
        manifest.record("threshold_violations", violations)
    path = manifest.save()
    if violations:
        raise ThresholdViolation("; ".join(violations))
    return path


def replay(cfg: dict, out: Path | None, argv: list[str]) -> str:
    """Re-execute the run described by a manifest and compare output digests."""
    from runlog import load_manifest

    manifest_path = _require_file(cfg, "inputs.file")
    recorded = load_manifest(manifest_path)
    verb = recorded["verb"]
    if verb not in HANDLERS:
        raise InvalidConfigError(f"cannot replay verb {verb!r}")
    run_dir = Path(manifest_path).resolve().parent
    target = out or run_dir.with_name(run_dir.name + "-replay")
    logger.info("Replaying %s from %s into %s", verb, manifest_path, target)
    new_manifest = execute(verb, recorded["config"], target, argv, int(recorded.get("workers", 1)))

    fresh = load_manifest(new_manifest)
    for name, entry in recorded["outputs"].items():
        now = fresh["outputs"].get(name)
        same = now is not None and now["blake2b"] == entry["blake2b"]
        logger.info("  %-20s %s", name, "identical" if same else "differs")
    return new_manifest


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.list:
        from presets import PRESETS

        print("\nAvailable presets:\n")
        for p in PRESETS:
            print(f"  {p['id']:<28} — {p['name']}")
        print()
        return 0
    if args.verb is None:
        parser.print_help()
        return 0

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s [%(levelname)s] %(name)s — %(message)s",
        datefmt="%H:%M:%S",
    )
    workers = settings.WORKERS if args.workers is None else args.workers
    try:
        if workers < 1:
            raise InvalidConfigError(f"workers must be >= 1, got {workers}")
        cfg = resolve_config(args)
        out = Path(args.out) if args.out else None
        if args.verb == "replay":
            missing = missing_keys(cfg, "replay")
            if missing:
                raise MissingInputError(f"replay needs config key(s): {', '.join(missing)}")
            replay(cfg, out, argv)
        else:
            out = out or Path(settings.OUTPUT_DIR) / (args.preset or "default") / args.verb
            execute(args.verb, cfg, out, argv, workers)
    except NeurVecError as exc:
        logger.error("%s failed: %s", args.verb, exc)
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("Unexpected error in %s", args.verb)
        print(f"error: internal: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

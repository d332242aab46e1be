#!/usr/bin/env python3
"""
Acceptance runner — executes the desk-scale acceptance criteria A1–A9.

Usage:
    # Run ALL criteria:
    python run_acceptance.py

    # Run specific criteria:
    python run_acceptance.py --criteria A1 A2 A8

    # Fewer epochs / trajectories for a smoke run:
    python run_acceptance.py --quick

    # List available criteria:
    python run_acceptance.py --list
"""

import argparse
import logging
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from bench import BenchCase, benchmark
from container import file_digest
from datasets import DatasetConfig, generate, load, save
from errors import ChecksumMismatch, Divergence
from evaluation import ErrorGridSpec, energy_error_curve, error_map, mse_curve
from neurvec import (
    INIT_DENOMINATOR,
    INIT_NUMERATOR,
    ModelMeta,
    TrainConfig,
    build_training_pairs,
    init_model,
    load_model,
    loss_and_grads,
    save_model,
    train,
)
from ode_systems import HarmonicOscillator, make_rng, make_system, sample_initial
from presets import preset_config
from solvers import IntegrationPlan, SolverScheme, integrate, integrate_with_corrector
from stats import t_tests

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s — %(message)s",
    datefmt="%H:%M:%S",
)
logger = logging.getLogger("acceptance")

SCHEME_ORDERS = {
    SolverScheme.EULER: 1,
    SolverScheme.IMPROVED_EULER: 2,
    SolverScheme.RK3: 3,
    SolverScheme.RK4: 4,
}

# Reference values for {1,2,3,4,5} vs {2,3,4,5,6}: t = -1, df = 8.
TTEST_ORACLE = {"statistic": -1.0, "df": 8.0, "p_value": 0.34659350708733416}

# Timing horizon for the overhead check; coarse Euler on the elastic pendulum stays bounded here.
OVERHEAD_HORIZON = 1.0

# Absolute guard in the gradient check's relative error.
GRADIENT_GUARD = 1e-12


@dataclass
class Context:
    workdir: Path
    quick: bool = False
    pause: float = 0.0
    workers: int = 1
    cache: dict[str, Any] = field(default_factory=dict)

    @property
    def epochs(self) -> int:
        return 50 if self.quick else 500


@dataclass
class Outcome:
    passed: bool
    detail: str


# ── Helpers ─────────────────────────────────────────────────────────────


def _dataset(ctx: Context, preset_id: str, scale: float, **changes: Any):
    cfg = preset_config(preset_id, scale / 10 if ctx.quick else scale)["dataset"]
    cfg.update(changes)
    return generate(DatasetConfig.from_mapping(cfg), workers=ctx.workers)


def _train(ctx: Context, dataset, scheme: SolverScheme, k: int, seed: int = 0):
    system = make_system(dataset.config.system, dataset.config.params)
    pairs = build_training_pairs(dataset, scheme, system, k)
    model, report = train(pairs, TrainConfig(epochs=ctx.epochs), seed)
    logger.info("trained %s/%s corrector, final loss %.3e", dataset.config.system, scheme.value, report.final_loss)
    return model


def _mean_mse(pred, reference) -> float:
    return float(mse_curve(pred, reference).mean.mean())


# ── Criteria ────────────────────────────────────────────────────────────


def a1_solver_order(ctx: Context) -> Outcome:
    system = HarmonicOscillator()
    u0 = np.array([[1.0, 0.0], [0.3, -0.7]])
    parts = []
    ok = True
    for scheme, order in SCHEME_ORDERS.items():
        dt = 0.02 if order <= 2 else 0.1
        errors = []
        for h in (dt, dt / 2):
            plan = IntegrationPlan.covering(h, 1.0, 1.0)
            final = integrate(scheme, system, u0, plan).states[-1]
            errors.append(np.max(np.abs(final - system.exact(u0, 1.0))))
        ratio = errors[0] / errors[1]
        expected = 2.0 ** order
        good = abs(ratio / expected - 1.0) <= 0.15
        ok &= good
        parts.append(f"{scheme.value}: {ratio:.2f} (want {expected:g})")
    return Outcome(ok, "; ".join(parts))


def _central_difference(model, flat, i, x, y, h) -> float:
    """Fourth-order central difference of the loss along one parameter entry."""
    saved = flat[i]
    values = []
    for offset in (2.0, 1.0, -1.0, -2.0):
        flat[i] = saved + offset * h
        values.append(loss_and_grads(model, x, y)[0])
    flat[i] = saved
    f2, f1, m1, m2 = values
    return (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * h)


def a2_gradient_oracle(ctx: Context) -> Outcome:
    rng = make_rng(2024)
    worst = 0.0
    h = 1e-3
    for draw in range(10):
        d, width, G = 3, 6, 5
        meta = ModelMeta(system="toy", scheme="euler", k=1, fine_dt=0.1, eta=0.1)
        model = init_model(d, width, meta, rng)
        model.a = np.array(INIT_NUMERATOR) + rng.uniform(-0.1, 0.1, 4)
        model.b = np.array(INIT_DENOMINATOR) + np.array([0.5, 0.0, 0.0]) + rng.uniform(-0.1, 0.1, 3)
        x = rng.normal(size=(G, d))
        y = rng.normal(size=(G, d))
        _, grads = loss_and_grads(model, x, y)
        for name, param in model.parameters().items():
            flat = param.reshape(-1)
            for i in range(flat.size):
                numeric = _central_difference(model, flat, i, x, y, h)
                analytic = grads[name].reshape(-1)[i]
                rel = abs(numeric - analytic) / (max(abs(numeric), abs(analytic)) + GRADIENT_GUARD)
                worst = max(worst, rel)
    return Outcome(worst < 1e-6, f"worst relative error {worst:.2e} over 10 draws")


def a3_leading_error(ctx: Context) -> Outcome:
    dataset = _dataset(ctx, "1-link-error-map", 1.0)
    model = _train(ctx, dataset, SolverScheme.EULER, 100)
    result = error_map(model, ErrorGridSpec(nodes=64))
    s = result.summary()
    ok = s["median_r_diff"] <= 1e-4 and s["median_r_diff"] <= 0.05 * s["median_r_el"]
    return Outcome(ok, f"median R_Diff {s['median_r_diff']:.2e}, median R_EL {s['median_r_el']:.2e}")


def a4_accuracy(ctx: Context) -> Outcome:
    train_set = _dataset(ctx, "elastic-pendulum-train", 0.01)
    model = _train(ctx, train_set, SolverScheme.RK4, 100)
    ctx.cache["elastic_model"] = model
    test = _dataset(ctx, "elastic-pendulum-test", 1.0, count=20 if ctx.quick else 100, duration=8.5)
    ref = test.as_trajectory()
    system = make_system("elastic-pendulum")
    init = test.initial_states()
    coarse = IntegrationPlan.covering(0.1, 8.5, 0.1)
    fine = IntegrationPlan.covering(1e-3, 8.5, 0.1)
    m_corr = _mean_mse(integrate_with_corrector(SolverScheme.RK4, system, model, init, coarse), ref)
    m_coarse = _mean_mse(integrate(SolverScheme.RK4, system, init, coarse), ref)
    m_fine = _mean_mse(integrate(SolverScheme.RK4, system, init, fine), ref)
    ok = m_corr <= 0.02 * m_coarse and m_corr <= 100 * m_fine
    return Outcome(ok, f"MSE corrector {m_corr:.2e}, coarse {m_coarse:.2e}, fine {m_fine:.2e}")


def a5_stability(ctx: Context) -> Outcome:
    train_set = _dataset(ctx, "spring-chain-train-euler", 0.01)
    model = _train(ctx, train_set, SolverScheme.EULER, 200)
    test = _dataset(ctx, "spring-chain-test", 1.0, count=10 if ctx.quick else 20, duration=17.0)
    ref = test.as_trajectory()
    system = make_system("spring-chain")
    plan = IntegrationPlan.covering(0.2, 17.0, 0.2)
    try:
        plain = mse_curve(integrate(SolverScheme.EULER, system, test.initial_states(), plan), ref)
        plain_bad = float(plain.mean.max()) > 1e2
        plain_note = f"plain peak MSE {plain.mean.max():.2e}"
    except Divergence as exc:
        plain_bad, plain_note = True, f"plain diverged at step {exc.step}"
    corr = mse_curve(integrate_with_corrector(SolverScheme.EULER, system, model, test.initial_states(), plan), ref)
    peak = float(corr.mean.max())
    return Outcome(plain_bad and peak < 1.0, f"{plain_note}; corrector peak MSE {peak:.2e}")


def _timing_model(ctx: Context, system, scheme: SolverScheme):
    """Width-1024 elastic corrector bound to ``scheme`` with its output layer zeroed.

    Runtime depends only on the network shape, and a zero correction keeps
    the corrected run exactly on the coarse trajectory.
    """
    meta = ModelMeta(system="elastic-pendulum", scheme=scheme.value, k=100, fine_dt=1e-3, eta=0.1,
                     params=system.params_dict())
    trained = ctx.cache.get("elastic_model")
    model = trained.copy() if trained is not None else init_model(system.dim, 1024, meta, make_rng(0))
    model.meta = meta
    model.Wa = np.zeros_like(model.Wa)
    return model


def _failure_note(report, group: str) -> str:
    return ", ".join(
        f"{c.role} {c.failures}/{c.failures + len(c.times)} diverged" for c in report.cases if c.group == group
    )


def a6_overhead(ctx: Context) -> Outcome:
    system = make_system("elastic-pendulum")
    init = sample_initial(system, 70, seed=2)
    trials = 10 if ctx.quick else 70
    fine = IntegrationPlan.covering(1e-3, OVERHEAD_HORIZON, 0.1)
    coarse = IntegrationPlan.covering(0.1, OVERHEAD_HORIZON, 0.1)
    epsilons: dict[str, float] = {}
    problems: list[str] = []
    speedup = None
    for scheme in SolverScheme:
        group = scheme.value
        model = _timing_model(ctx, system, scheme)
        cases = [
            BenchCase("coarse", group, "coarse", scheme, system, init, coarse),
            BenchCase("corrector", group, "corrector", scheme, system, init, coarse, model),
        ]
        if scheme is SolverScheme.RK4:
            cases.insert(0, BenchCase("fine", group, "fine", scheme, system, init, fine))
        report = benchmark(cases, trials=trials, pause=ctx.pause, workers=ctx.workers)
        stats = report.groups[group]
        if "epsilon" in stats:
            epsilons[group] = stats["epsilon"]
        else:
            problems.append(f"{group}: no epsilon ({_failure_note(report, group)})")
        if scheme is SolverScheme.RK4:
            ctx.cache["rk4_bench"] = report
            speedup = stats.get("speedup")
            if speedup is None:
                problems.append(f"{group}: no speedup ({_failure_note(report, group)})")

    eps = ", ".join(f"{k} {v:.2f}" for k, v in epsilons.items())
    detail = f"epsilon: {eps or 'none'}; speedup " + (f"{speedup:.1f}x" if speedup is not None else "n/a")
    if problems:
        return Outcome(False, f"{detail}; {'; '.join(problems)}")
    ok = all(e < 1.0 for e in epsilons.values()) and speedup >= 0.3 * 100
    return Outcome(ok, detail)


def a7_energy(ctx: Context) -> Outcome:
    system = make_system("henon-heiles")
    reference = _dataset(ctx, "henon-heiles-test", 1.0, count=5)
    drift = float(energy_error_curve(reference.as_trajectory(), system).max.max())

    train_set = _dataset(ctx, "henon-heiles-train", 0.01)
    model = _train(ctx, train_set, SolverScheme.RK4, 500)
    init = sample_initial(system, 20, seed=2)
    plan = IntegrationPlan.covering(0.5, 50.0, 0.5)
    corr = energy_error_curve(
        integrate_with_corrector(SolverScheme.RK4, system, model, init, plan), system
    )
    plain = energy_error_curve(integrate(SolverScheme.RK4, system, init, plan), system)
    e_corr, e_plain = float(corr.mean.mean()), float(plain.mean.mean())
    ok = drift < 1e-8 and e_corr < 0.1 and e_plain >= 10 * e_corr
    return Outcome(ok, f"reference drift {drift:.1e}; energy error corrector {e_corr:.2e}, plain {e_plain:.2e}")


def a8_statistics(ctx: Context) -> Outcome:
    res = t_tests([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    oracle_ok = all(
        abs(r.statistic - TTEST_ORACLE["statistic"]) < 1e-10
        and abs(r.df - TTEST_ORACLE["df"]) < 1e-10
        and abs(r.p_value - TTEST_ORACLE["p_value"]) < 1e-8
        for r in res.values()
    )
    report = ctx.cache.get("rk4_bench")
    if report is None:
        return Outcome(oracle_ok, "oracle matched; timing comparison skipped (run A6 first)")
    tests = report.groups.get("rk4", {}).get("t_tests", {}).get("fine_vs_corrector")
    if tests is None:
        note = _failure_note(report, "rk4") or "no rk4 group"
        return Outcome(False, f"oracle {'matched' if oracle_ok else 'MISMATCH'}; timing t-tests unavailable ({note})")
    p_student, p_welch = tests["student_t"]["p_value"], tests["welch_t"]["p_value"]
    ok = oracle_ok and p_student < 1e-3 and p_welch < 1e-3
    return Outcome(ok, f"oracle {'matched' if oracle_ok else 'MISMATCH'}; timing p {p_student:.1e} / {p_welch:.1e}")


def a9_determinism(ctx: Context) -> Outcome:
    import main

    digests = []
    for rep in range(2):
        out = ctx.workdir / f"a9-{rep}"
        args = ["--preset", "1-link-pendulum-train", "--scale", "0.05", "--seed", "7", "--log-level", "WARNING"]
        code = main.run(["generate", *args, "--out", str(out / "gen")])
        if code != 0:
            return Outcome(False, f"generate run {rep + 1} failed with exit code {code}")
        code = main.run([
            "train", "--preset", "1-link-pendulum-train", "--dataset", str(out / "gen" / "dataset.nvds"),
            "--set", "train.epochs=3", "--set", "train.batch_size=64", "--set", "train.width=32",
            "--out", str(out / "train"), "--log-level", "WARNING",
        ])
        if code != 0:
            return Outcome(False, f"train run {rep + 1} failed with exit code {code}")
        digests.append((file_digest(out / "gen" / "dataset.nvds"), file_digest(out / "train" / "model.nvec")))
    same = digests[0] == digests[1]

    ds_path = ctx.workdir / "a9-0" / "gen" / "dataset.nvds"
    copy_path = ctx.workdir / "a9-copy.nvds"
    save(load(str(ds_path)), str(copy_path))
    round_trip = file_digest(copy_path) == file_digest(ds_path)
    model_path = ctx.workdir / "a9-0" / "train" / "model.nvec"
    model_copy = ctx.workdir / "a9-copy.nvec"
    save_model(load_model(str(model_path)), str(model_copy))
    round_trip &= file_digest(model_copy) == file_digest(model_path)

    data = bytearray(copy_path.read_bytes())
    # Last payload value, clear of the header and the trailing checksum.
    data[-12] ^= 0x01
    copy_path.write_bytes(bytes(data))
    try:
        load(str(copy_path))
        rejected = False
    except ChecksumMismatch:
        rejected = True
    return Outcome(same and round_trip and rejected,
                   f"rerun identical: {same}; round-trip bitwise: {round_trip}; corruption rejected: {rejected}")


CRITERIA: list[dict] = [
    {"id": "A1", "name": "Solver order verification", "run": a1_solver_order},
    {"id": "A2", "name": "Gradient oracle", "run": a2_gradient_oracle},
    {"id": "A3", "name": "Leading-error recovery (1-link pendulum)", "run": a3_leading_error},
    {"id": "A4", "name": "Accuracy recovery (elastic pendulum)", "run": a4_accuracy},
    {"id": "A5", "name": "Stability rescue (spring-chain, Euler)", "run": a5_stability},
    {"id": "A6", "name": "Overhead and speedup", "run": a6_overhead},
    {"id": "A7", "name": "Energy conservation (Hénon–Heiles)", "run": a7_energy},
    {"id": "A8", "name": "Statistics", "run": a8_statistics},
    {"id": "A9", "name": "Determinism and round-trip", "run": a9_determinism},
]


def run_criterion(ctx: Context, criterion: dict, index: int, total: int) -> dict:
    print(f"\n{'='*64}")
    print(f"  [{index}/{total}] {criterion['id']} {criterion['name']}")
    print(f"{'='*64}")
    start = time.time()
    try:
        outcome = criterion["run"](ctx)
    except Exception as exc:
        logger.exception("%s raised", criterion["id"])
        outcome = Outcome(False, f"ERROR: {exc}")
    elapsed = time.time() - start
    print(f"  Result   : {'pass' if outcome.passed else 'FAIL'}")
    print(f"  Detail   : {outcome.detail}")
    print(f"  Duration : {elapsed:.0f}s")
    return {"id": criterion["id"], "passed": outcome.passed, "detail": outcome.detail, "elapsed": elapsed}


def run_all(ctx: Context, criteria: list[dict], wait_between: float) -> bool:
    total = len(criteria)
    results: list[dict] = []
    print(f"\nRunning {total} acceptance criteria{' (quick)' if ctx.quick else ''}")
    for i, criterion in enumerate(criteria, 1):
        results.append(run_criterion(ctx, criterion, i, total))
        if i < total and wait_between > 0:
            print(f"\n  Pausing {wait_between:g}s before next criterion...")
            time.sleep(wait_between)

    # ── Summary ─────────────────────────────────────────────────────────
    print(f"\n{'='*64}")
    print("  ACCEPTANCE SUMMARY")
    print(f"{'='*64}")
    passed = sum(1 for r in results if r["passed"])
    for r in results:
        icon = "OK" if r["passed"] else "FAIL"
        print(f"  [{icon:>4}] {r['id']:<4} — {r['detail']}")
    print(f"\n  Passed: {passed}/{total}   Failed: {total - passed}/{total}")
    print(f"{'='*64}\n")
    return passed == total


def main() -> None:
    parser = argparse.ArgumentParser(description="Run the desk-scale acceptance criteria")
    parser.add_argument("--criteria", nargs="+", help="Specific criterion IDs to run (default: all)")
    parser.add_argument("--quick", action="store_true", help="Fewer epochs and trajectories")
    parser.add_argument("--wait", type=float, default=0.0, help="Seconds to wait between criteria (default: 0)")
    parser.add_argument("--pause", type=float, default=0.0,
                        help="Seconds between benchmark runs (default: 0; the timing protocol uses 10)")
    parser.add_argument("--workers", type=int, default=1, help="Worker threads for batch integration")
    parser.add_argument("--keep", action="store_true", help="Keep the scratch directory")
    parser.add_argument("--list", action="store_true", help="List available criteria and exit")
    args = parser.parse_args()

    if args.list:
        print("\nAvailable criteria:\n")
        for c in CRITERIA:
            print(f"  {c['id']:<4} — {c['name']}")
        print()
        return

    if args.criteria:
        all_ids = {c["id"] for c in CRITERIA}
        selected = []
        for cid in args.criteria:
            if cid not in all_ids:
                print(f"Unknown criterion: {cid}")
                print(f"Available: {', '.join(sorted(all_ids))}")
                sys.exit(1)
            selected.append(next(c for c in CRITERIA if c["id"] == cid))
    else:
        selected = CRITERIA

    workdir = Path(tempfile.mkdtemp(prefix="neurvec-acceptance-"))
    ctx = Context(workdir=workdir, quick=args.quick, pause=args.pause, workers=args.workers)
    try:
        ok = run_all(ctx, selected, args.wait)
    finally:
        if args.keep:
            print(f"Scratch files kept in {workdir}")
        else:
            shutil.rmtree(workdir, ignore_errors=True)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()

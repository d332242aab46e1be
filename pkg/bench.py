"""
Wall-clock benchmark harness.

Each case integrates one partition of its initial-state batch per trial;
only the integration call is timed.  A configurable pause separates every
two runs.  Cases are grouped (one group per scheme) and each group may hold
three roles:

    fine       plain scheme at Δt
    coarse     plain scheme at kΔt   (the runtime unit)
    corrector  scheme at kΔt plus the learned correction
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from errors import DegenerateVariance, Divergence, InvalidConfigError
from ode_systems import DynamicalSystem
from solvers import IntegrationPlan, SolverScheme, integrate, integrate_with_corrector
from stats import t_tests

logger = logging.getLogger(__name__)

ROLES = ("fine", "coarse", "corrector")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter_ns()
        self.end = None
        self.elapsed = None
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end = time.perf_counter_ns()
        self.elapsed = self.end - self.start


@dataclass
class BenchCase:
    name: str
    group: str
    role: str
    scheme: SolverScheme
    system: DynamicalSystem
    init: np.ndarray
    plan: IntegrationPlan
    model: Any = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise InvalidConfigError(f"bench role must be one of {', '.join(ROLES)}, got {self.role!r}")
        if (self.role == "corrector") != (self.model is not None):
            raise InvalidConfigError(f"case {self.name!r}: exactly the corrector role takes a model")

    def run(self, init: np.ndarray, workers: int = 1) -> None:
        if self.model is None:
            integrate(self.scheme, self.system, init, self.plan, workers=workers)
        else:
            integrate_with_corrector(self.scheme, self.system, self.model, init, self.plan, workers=workers)


@dataclass
class CaseTiming:
    name: str
    group: str
    role: str
    n_steps: int
    batch: int
    times: list[float] = field(default_factory=list)  # seconds, successful trials only
    failures: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.times)) if self.times else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.times, ddof=1)) if len(self.times) > 1 else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "group": self.group,
            "role": self.role,
            "n_steps": self.n_steps,
            "batch": self.batch,
            "trials": len(self.times) + self.failures,
            "failures": self.failures,
            "mean": self.mean,
            "std": self.std,
            "times": list(self.times),
        }


@dataclass
class BenchReport:
    cases: list[CaseTiming]
    trials: int
    pause: float
    workers: int
    groups: dict[str, dict[str, Any]] = field(default_factory=dict)

    def case(self, group: str, role: str) -> CaseTiming | None:
        for c in self.cases:
            if c.group == group and c.role == role:
                return c
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "trials": self.trials,
            "pause": self.pause,
            "workers": self.workers,
            "cases": [c.to_dict() for c in self.cases],
            "groups": self.groups,
        }

    def columns(self) -> dict[str, list]:
        """Per-case table: role index (0 fine, 1 coarse, 2 corrector), mean, std, normalized time."""
        rows: dict[str, list] = {"role": [], "mean": [], "std": [], "normalized": [], "n_steps": []}
        for c in self.cases:
            rows["role"].append(ROLES.index(c.role))
            rows["mean"].append(c.mean)
            rows["std"].append(c.std)
            rows["normalized"].append(self.groups.get(c.group, {}).get("normalized", {}).get(c.role, math.nan))
            rows["n_steps"].append(c.n_steps)
        return rows


def _partition(init: np.ndarray, trial: int, trials: int) -> np.ndarray:
    """Equal-sized, cycling partitions; the whole batch when it has fewer rows than trials."""
    n = init.shape[0]
    if n < trials:
        return init
    size = n // trials
    start = trial * size
    return init[start:start + size]


def _compare(a: CaseTiming | None, b: CaseTiming | None) -> dict[str, Any] | None:
    if a is None or b is None or len(a.times) < 2 or len(b.times) < 2:
        return None
    try:
        return {name: res.to_dict() for name, res in t_tests(a.times, b.times).items()}
    except DegenerateVariance:
        return None


def summarize(cases: list[CaseTiming]) -> dict[str, dict[str, Any]]:
    """Normalized runtimes, speedup, overhead ε and t-tests per group, all from the raw trial times."""
    groups: dict[str, dict[str, Any]] = {}
    for group in dict.fromkeys(c.group for c in cases):
        by_role = {c.role: c for c in cases if c.group == group}
        fine, coarse, corr = (by_role.get(r) for r in ROLES)
        entry: dict[str, Any] = {}
        if coarse is not None and coarse.times:
            unit = coarse.mean
            entry["normalized"] = {role: c.mean / unit for role, c in by_role.items() if c.times}
        if fine is not None and corr is not None and fine.times and corr.times:
            entry["speedup"] = fine.mean / corr.mean
        if coarse is not None and corr is not None and coarse.times and corr.times:
            entry["epsilon"] = (corr.mean / corr.n_steps) / (coarse.mean / coarse.n_steps) - 1.0
        tests = {"fine_vs_corrector": _compare(fine, corr), "fine_vs_coarse": _compare(fine, coarse)}
        entry["t_tests"] = {k: v for k, v in tests.items() if v is not None}
        groups[group] = entry
    return groups


def benchmark(
    cases: list[BenchCase],
    trials: int = 70,
    pause: float = 10.0,
    workers: int = 1,
) -> BenchReport:
    """Time every case ``trials`` times, sleeping ``pause`` seconds between every two runs."""
    if trials < 2:
        raise InvalidConfigError(f"trials must be >= 2, got {trials}")
    if pause < 0:
        raise InvalidConfigError(f"pause must be >= 0, got {pause}")

    timer = Timer()
    results: list[CaseTiming] = []
    first_run = True
    for case in cases:
        timing = CaseTiming(
            name=case.name,
            group=case.group,
            role=case.role,
            n_steps=case.plan.n_steps,
            batch=_partition(case.init, 0, trials).shape[0],
        )
        logger.info(
            "Benchmarking %s (%s, %d steps, batch %d, %d trials)",
            case.name, case.role, case.plan.n_steps, timing.batch, trials,
        )
        for trial in range(trials):
            if not first_run and pause > 0:
                time.sleep(pause)
            first_run = False
            init = _partition(case.init, trial, trials)
            try:
                with timer:
                    case.run(init, workers=workers)
            except Divergence as exc:
                timing.failures += 1
                logger.warning("%s trial %d diverged: %s", case.name, trial, exc)
                continue
            timing.times.append(timer.elapsed / 1e9)
            logger.debug("%s trial %d: %.6fs", case.name, trial, timing.times[-1])
        logger.info("  %s: mean %.6fs, std %.6fs, %d failed", case.name, timing.mean, timing.std, timing.failures)
        results.append(timing)

    return BenchReport(cases=results, trials=trials, pause=pause, workers=workers, groups=summarize(results))

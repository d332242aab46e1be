import math
import time

import numpy as np
import pytest

from bench import BenchCase, CaseTiming, Timer, _partition, benchmark, summarize
from errors import InvalidConfigError
from ode_systems import LinearSystem
from solvers import IntegrationPlan, SolverScheme


def test_timer_measures_nanoseconds():
    with Timer() as timer:
        time.sleep(0.01)
    assert timer.elapsed >= 5_000_000
    assert timer.end > timer.start


def test_partition():
    init = np.arange(20.0).reshape(10, 2)
    np.testing.assert_array_equal(_partition(init, 1, 5), init[2:4])
    assert _partition(init, 4, 5).shape == (2, 2)
    np.testing.assert_array_equal(_partition(init, 3, 70), init)


def test_summary_from_synthetic_timings():
    cases = [
        CaseTiming("fine", "rk4", "fine", n_steps=1000, batch=1, times=[2.0, 2.02, 1.98]),
        CaseTiming("coarse", "rk4", "coarse", n_steps=10, batch=1, times=[0.01, 0.011, 0.009]),
        CaseTiming("corr", "rk4", "corrector", n_steps=10, batch=1, times=[0.011, 0.0121, 0.0099]),
    ]
    group = summarize(cases)["rk4"]
    assert group["normalized"]["coarse"] == pytest.approx(1.0)
    assert group["normalized"]["fine"] == pytest.approx(200.0)
    assert group["speedup"] == pytest.approx(2.0 / 0.011)
    assert group["epsilon"] == pytest.approx(0.1)
    assert set(group["t_tests"]) == {"fine_vs_corrector", "fine_vs_coarse"}
    assert group["t_tests"]["fine_vs_corrector"]["welch_t"]["p_value"] < 1e-3


def test_summary_without_corrector():
    cases = [
        CaseTiming("fine", "euler", "fine", n_steps=100, batch=1, times=[1.0, 1.1]),
        CaseTiming("coarse", "euler", "coarse", n_steps=10, batch=1, times=[0.1, 0.11]),
    ]
    group = summarize(cases)["euler"]
    assert "speedup" not in group and "epsilon" not in group
    assert set(group["t_tests"]) == {"fine_vs_coarse"}


def test_benchmark_runs_every_role(decay):
    init = np.ones((6, 2))
    cases = [
        BenchCase("fine", "euler", "fine", SolverScheme.EULER, decay, init, IntegrationPlan.covering(0.01, 1.0, 0.1)),
        BenchCase("coarse", "euler", "coarse", SolverScheme.EULER, decay, init, IntegrationPlan.covering(0.1, 1.0)),
    ]
    report = benchmark(cases, trials=3, pause=0.0)
    assert [c.role for c in report.cases] == ["fine", "coarse"]
    assert all(len(c.times) == 3 and c.failures == 0 for c in report.cases)
    assert report.cases[0].batch == 2
    payload = report.to_dict()
    assert payload["trials"] == 3 and len(payload["cases"]) == 2
    cols = report.columns()
    assert cols["role"] == [0, 1]
    assert cols["normalized"][1] == pytest.approx(1.0)


def test_benchmark_with_corrector(oscillator, null_model):
    init = np.ones((4, 2))
    plan = IntegrationPlan.covering(0.1, 1.0)
    cases = [
        BenchCase("coarse", "euler", "coarse", SolverScheme.EULER, oscillator, init, plan),
        BenchCase("corr", "euler", "corrector", SolverScheme.EULER, oscillator, init, plan, null_model),
    ]
    report = benchmark(cases, trials=2, pause=0.0)
    assert "epsilon" in report.groups["euler"]
    assert report.case("euler", "corrector").failures == 0


def test_diverging_trials_are_counted_as_failures():
    case = BenchCase("blowup", "euler", "coarse", SolverScheme.EULER, LinearSystem(rate=100.0),
                     np.ones((2, 1)), IntegrationPlan(dt=1.0, n_steps=10))
    report = benchmark([case], trials=2, pause=0.0)
    timing = report.cases[0]
    assert timing.failures == 2
    assert math.isnan(timing.mean)
    assert timing.to_dict()["trials"] == 2


def test_benchmark_argument_checks(decay, null_model):
    case = BenchCase("c", "g", "coarse", SolverScheme.EULER, decay, np.ones((2, 2)), IntegrationPlan(dt=0.1, n_steps=1))
    with pytest.raises(InvalidConfigError):
        benchmark([case], trials=1, pause=0.0)
    with pytest.raises(InvalidConfigError):
        benchmark([case], trials=2, pause=-1.0)
    with pytest.raises(InvalidConfigError):
        BenchCase("c", "g", "corrector", SolverScheme.EULER, decay, np.ones((2, 2)), IntegrationPlan(dt=0.1, n_steps=1))
    with pytest.raises(InvalidConfigError):
        BenchCase("c", "g", "fine", SolverScheme.EULER, decay, np.ones((2, 2)),
                  IntegrationPlan(dt=0.1, n_steps=1), null_model)
    with pytest.raises(InvalidConfigError):
        BenchCase("c", "g", "reference", SolverScheme.EULER, decay, np.ones((2, 2)), IntegrationPlan(dt=0.1, n_steps=1))

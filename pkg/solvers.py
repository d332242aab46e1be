"""
Fixed-step explicit integrators.

``step_increment`` returns the scheme increment S(f, u, Δt) only; the loops
add it to the state (and, for the corrected loop, add the learned
correction on top), so every macro-step is ``u + S + correction``.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable

import numpy as np

from errors import InvalidConfigError, ModelSystemMismatch, StepSizeMismatch
from ode_systems import DynamicalSystem, as_state_batch, check_states

if TYPE_CHECKING:
    from neurvec import NeurVecModel

logger = logging.getLogger(__name__)

STEP_RTOL = 1e-12


class SolverScheme(Enum):
    EULER = "euler"
    IMPROVED_EULER = "improved-euler"
    RK3 = "rk3"
    RK4 = "rk4"

    @property
    def stages(self) -> int:
        return _STAGES[self]


_STAGES = {
    SolverScheme.EULER: 1,
    SolverScheme.IMPROVED_EULER: 2,
    SolverScheme.RK3: 3,
    SolverScheme.RK4: 4,
}


def parse_scheme(value: "str | SolverScheme") -> SolverScheme:
    try:
        return SolverScheme(value)
    except ValueError as exc:
        raise InvalidConfigError(
            f"unknown scheme {value!r}; expected one of {', '.join(s.value for s in SolverScheme)}"
        ) from exc


@dataclass(frozen=True)
class IntegrationPlan:
    """``n_steps`` steps of size ``dt``, recording every ``sample_every`` steps (η = sample_every·dt)."""

    dt: float
    n_steps: int
    sample_every: int = 1

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise InvalidConfigError(f"dt must be > 0, got {self.dt}")
        if self.sample_every < 1:
            raise InvalidConfigError(f"sample_every must be >= 1, got {self.sample_every}")
        if self.n_steps < 0 or self.n_steps % self.sample_every:
            raise InvalidConfigError(
                f"n_steps ({self.n_steps}) must be a non-negative multiple of "
                f"sample_every ({self.sample_every})"
            )

    @property
    def eta(self) -> float:
        return self.sample_every * self.dt

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.sample_every + 1

    @classmethod
    def covering(cls, dt: float, horizon: float, eta: float | None = None) -> "IntegrationPlan":
        """Plan integrating to ``horizon`` with samples every ``eta`` (default: every step)."""
        sample_every = 1 if eta is None else _integer_ratio(eta, dt, "eta", "dt")
        intervals = _integer_ratio(horizon, sample_every * dt, "horizon", "eta")
        return cls(dt=dt, n_steps=intervals * sample_every, sample_every=sample_every)


@dataclass
class Trajectory:
    """Samples at ``times`` (uniform spacing η); ``states`` has shape (samples, N, d)."""

    times: np.ndarray
    states: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def batch(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def window(self, t0: float, t1: float) -> "Trajectory":
        """Samples with ``t0 <= t <= t1`` (small tolerance on both ends)."""
        tol = 1e-9 * max(1.0, abs(t1))
        mask = (self.times >= t0 - tol) & (self.times <= t1 + tol)
        return Trajectory(times=self.times[mask], states=self.states[mask])


def _integer_ratio(num: float, den: float, num_name: str, den_name: str) -> int:
    ratio = int(round(num / den))
    if ratio < 0 or abs(ratio * den - num) > 1e-9 * max(abs(num), abs(den)):
        raise InvalidConfigError(f"{num_name}={num} is not an integer multiple of {den_name}={den}")
    return ratio


# ── Increments ──────────────────────────────────────────────────────────


def step_increment(
    scheme: SolverScheme,
    system: DynamicalSystem,
    states: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Return S(f, u, dt) for the given scheme (increment only)."""
    if not dt > 0:
        raise InvalidConfigError(f"dt must be > 0, got {dt}")
    f = system.f
    u = states

    if scheme is SolverScheme.EULER:
        return dt * f(u)

    if scheme is SolverScheme.IMPROVED_EULER:
        k1 = f(u)
        k2 = f(u + dt * k1)
        return 0.5 * dt * (k1 + k2)

    if scheme is SolverScheme.RK3:
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u - dt * k1 + 2.0 * dt * k2)
        return dt * (k1 / 6.0 + 2.0 * k2 / 3.0 + k3 / 6.0)

    if scheme is SolverScheme.RK4:
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        return dt * (k1 / 6.0 + k2 / 3.0 + k3 / 3.0 + k4 / 6.0)

    raise InvalidConfigError(f"unsupported scheme {scheme!r}")


# ── Loops ───────────────────────────────────────────────────────────────

Corrector = Callable[[np.ndarray], np.ndarray]


def _run_rows(
    scheme: SolverScheme,
    system: DynamicalSystem,
    init: np.ndarray,
    plan: IntegrationPlan,
    corrector: Corrector | None,
    row_offset: int,
) -> np.ndarray:
    u = init.copy()
    samples = np.empty((plan.n_samples, u.shape[0], u.shape[1]))
    samples[0] = u
    slot = 1
    for step in range(1, plan.n_steps + 1):
        if corrector is None:
            u = u + step_increment(scheme, system, u, plan.dt)
        else:
            u = u + step_increment(scheme, system, u, plan.dt) + corrector(u)
        check_states(system, u, step, row_offset)
        if step % plan.sample_every == 0:
            samples[slot] = u
            slot += 1
    return samples


def _run(
    scheme: SolverScheme,
    system: DynamicalSystem,
    init: np.ndarray,
    plan: IntegrationPlan,
    corrector: Corrector | None,
    workers: int,
) -> Trajectory:
    init = as_state_batch(init, system.dim)
    check_states(system, init, 0)
    times = np.arange(plan.n_samples) * plan.eta

    workers = max(1, min(int(workers), init.shape[0]))
    if workers == 1:
        states = _run_rows(scheme, system, init, plan, corrector, 0)
        return Trajectory(times=times, states=states)

    # Rows never interact, so disjoint row blocks integrate independently.
    bounds = np.linspace(0, init.shape[0], workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_rows, scheme, system, init[lo:hi], plan, corrector, int(lo))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        parts = [fut.result() for fut in futures]
    return Trajectory(times=times, states=np.concatenate(parts, axis=1))


def integrate(
    scheme: SolverScheme,
    system: DynamicalSystem,
    init: np.ndarray,
    plan: IntegrationPlan,
    workers: int = 1,
) -> Trajectory:
    """u_{n+1} = u_n + S(f, u_n, dt), sampled every ``plan.sample_every`` steps including t = 0."""
    logger.debug(
        "integrate %s %s: N=%d dt=%g steps=%d",
        scheme.value, system.name, np.shape(init)[0], plan.dt, plan.n_steps,
    )
    return _run(scheme, system, init, plan, None, workers)


def check_model_binding(
    scheme: SolverScheme,
    system: DynamicalSystem,
    model: "NeurVecModel",
    dt: float,
) -> None:
    """Reject a model used on another system, scheme or coarse step than it was trained for."""
    meta = model.meta
    if model.d != system.dim:
        raise ModelSystemMismatch(f"model dimension {model.d} != system dimension {system.dim}")
    if system.system_id is not None and meta.system != system.system_id.value:
        raise ModelSystemMismatch(f"model trained for {meta.system}, not {system.system_id.value}")
    if meta.params and system.params_dict() and meta.params != system.params_dict():
        raise ModelSystemMismatch(f"model trained with {meta.system} parameters {meta.params}")
    if meta.scheme != scheme.value:
        raise ModelSystemMismatch(f"model trained for scheme {meta.scheme}, not {scheme.value}")
    coarse = meta.coarse_dt
    if abs(dt - coarse) > STEP_RTOL * coarse:
        raise StepSizeMismatch(f"model trained for coarse step {coarse:g}, plan uses {dt:g}")


def integrate_with_corrector(
    scheme: SolverScheme,
    system: DynamicalSystem,
    model: "NeurVecModel",
    init: np.ndarray,
    plan: IntegrationPlan,
    workers: int = 1,
) -> Trajectory:
    """û_{n+1} = û_n + S(f, û_n, kΔt) + NeurVec(û_n), with the model bound to (system, scheme, kΔt)."""
    from neurvec import correction

    check_model_binding(scheme, system, model, plan.dt)
    logger.debug(
        "integrate_with_corrector %s %s: N=%d dt=%g steps=%d width=%d",
        scheme.value, system.name, np.shape(init)[0], plan.dt, plan.n_steps, model.width,
    )
    return _run(scheme, system, init, plan, lambda u: correction(model, u), workers)

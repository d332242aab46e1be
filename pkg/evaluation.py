"""
Accuracy metrics over simulated trajectories.

All functions are pure and reduce in a fixed order, so repeated runs on the
same inputs give bitwise-identical outputs.  Results are written as plain
tables (one header line, whitespace-separated columns).
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from errors import EmptyRange, ModelSystemMismatch, ShapeMismatch, TimeAxisMismatch
from ode_systems import DynamicalSystem, SystemId, make_system
from solvers import SolverScheme, Trajectory

logger = logging.getLogger(__name__)

TIME_BINS = 800
VALUE_BINS = 100
RANGE_PADDING = 0.05
TIME_ATOL = 1e-9


# ── Curves ──────────────────────────────────────────────────────────────


@dataclass
class MseCurve:
    """Per-time mean, min and max over trajectories."""

    times: np.ndarray
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray

    def columns(self) -> dict[str, np.ndarray]:
        return {"t": self.times, "mean": self.mean, "min": self.min, "max": self.max}

    def window(self, t0: float, t1: float) -> "MseCurve":
        """Samples with ``t0 <= t <= t1``; values keep whatever baseline the full curve used."""
        tol = 1e-9 * max(1.0, abs(t1))
        mask = (self.times >= t0 - tol) & (self.times <= t1 + tol)
        if not mask.any():
            raise EmptyRange(f"no samples in window [{t0}, {t1}]")
        return MseCurve(times=self.times[mask], mean=self.mean[mask], min=self.min[mask], max=self.max[mask])

    def summary(self) -> dict[str, float]:
        return {
            "t_start": float(self.times[0]),
            "t_end": float(self.times[-1]),
            "mean_of_mean": float(self.mean.mean()),
            "final_mean": float(self.mean[-1]),
            "peak_max": float(self.max.max()),
        }


def _reduce(times: np.ndarray, per_traj: np.ndarray) -> MseCurve:
    return MseCurve(
        times=np.asarray(times, dtype=np.float64),
        mean=per_traj.mean(axis=1),
        min=per_traj.min(axis=1),
        max=per_traj.max(axis=1),
    )


def mse_curve(pred: Trajectory, reference: Trajectory) -> MseCurve:
    """Squared error averaged over state dimensions, then mean/min/max over trajectories per time."""
    if pred.states.shape != reference.states.shape:
        raise ShapeMismatch(
            f"prediction {pred.states.shape} and reference {reference.states.shape} differ"
        )
    if pred.times.shape != reference.times.shape or not np.allclose(
        pred.times, reference.times, rtol=0.0, atol=TIME_ATOL
    ):
        raise TimeAxisMismatch("prediction and reference are sampled at different times")
    err = pred.states - reference.states
    per_traj = np.mean(err * err, axis=2)
    return _reduce(reference.times, per_traj)


def energy_error_curve(traj: Trajectory, system: DynamicalSystem) -> MseCurve:
    """|H(u(t)) − H(u(0))| per trajectory, reduced like :func:`mse_curve`."""
    S, N, d = traj.states.shape
    h = system.hamiltonian(traj.states.reshape(S * N, d)).reshape(S, N)
    return _reduce(traj.times, np.abs(h - h[0]))


# ── Time-series histogram ───────────────────────────────────────────────


@dataclass
class HistogramGrid:
    variable: int
    time_edges: np.ndarray
    value_edges: np.ndarray
    counts: np.ndarray  # (time_bins, value_bins), int64

    @property
    def value_range(self) -> tuple[float, float]:
        return float(self.value_edges[0]), float(self.value_edges[-1])

    def columns(self) -> dict[str, np.ndarray]:
        """Long format: one row per (time bin, value bin) cell."""
        tb, vb = np.meshgrid(
            np.arange(self.counts.shape[0]), np.arange(self.counts.shape[1]), indexing="ij"
        )
        t_mid = 0.5 * (self.time_edges[:-1] + self.time_edges[1:])
        v_mid = 0.5 * (self.value_edges[:-1] + self.value_edges[1:])
        return {
            "t": t_mid[tb].ravel(),
            "value": v_mid[vb].ravel(),
            "count": self.counts.ravel().astype(np.float64),
        }


def default_value_range(traj: Trajectory, variable: int, padding: float = RANGE_PADDING) -> tuple[float, float]:
    """Data min/max of one state component, widened by ``padding`` of the span on each side."""
    values = traj.states[:, :, variable]
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span == 0.0:
        span = max(abs(lo), 1.0)
    return lo - padding * span, hi + padding * span


def time_series_histogram(
    traj: Trajectory,
    variable: int,
    value_range: tuple[float, float],
    time_bins: int = TIME_BINS,
    value_bins: int = VALUE_BINS,
) -> HistogramGrid:
    """
    Count, per (time bin, value bin) cell, the trajectories whose
    piecewise-linear curve crosses that cell.

    Within a time bin a continuous curve covers exactly the value interval
    between its minimum and maximum there, which is attained at the bin
    edges (interpolated) or at sample knots inside the bin.  Each
    trajectory therefore marks one contiguous run of value bins per time
    bin and contributes at most 1 to any cell.
    """
    lo_v, hi_v = (float(v) for v in value_range)
    if not (math.isfinite(lo_v) and math.isfinite(hi_v)) or not lo_v < hi_v:
        raise EmptyRange(f"value range must be finite with lo < hi, got ({lo_v}, {hi_v})")
    times = np.asarray(traj.times, dtype=np.float64)
    if times.size < 2 or not times[-1] > times[0]:
        raise EmptyRange("time axis needs at least two distinct sample times")
    if not 0 <= variable < traj.dim:
        raise ShapeMismatch(f"variable index {variable} outside state dimension {traj.dim}")

    x = traj.states[:, :, variable]  # (S, N)
    t0, t1 = times[0], times[-1]
    time_edges = np.linspace(t0, t1, time_bins + 1)
    value_edges = np.linspace(lo_v, hi_v, value_bins + 1)

    # Curve values at every time-bin edge.
    seg = np.clip(np.searchsorted(times, time_edges, side="right") - 1, 0, times.size - 2)
    w = ((time_edges - times[seg]) / (times[seg + 1] - times[seg]))[:, None]
    at_edges = x[seg] * (1.0 - w) + x[seg + 1] * w  # (B+1, N)

    lo = np.minimum(at_edges[:-1], at_edges[1:])
    hi = np.maximum(at_edges[:-1], at_edges[1:])
    knot_bin = np.clip(((times - t0) / (t1 - t0) * time_bins).astype(np.int64), 0, time_bins - 1)
    np.minimum.at(lo, knot_bin, x)
    np.maximum.at(hi, knot_bin, x)

    scale = value_bins / (hi_v - lo_v)
    first = np.floor((lo - lo_v) * scale).astype(np.int64)
    last = np.floor((hi - lo_v) * scale).astype(np.int64)
    visible = (last >= 0) & (first <= value_bins - 1)
    first = np.clip(first, 0, value_bins - 1)
    last = np.clip(last, 0, value_bins - 1)

    rows = np.broadcast_to(np.arange(time_bins)[:, None], first.shape)
    diff = np.zeros((time_bins, value_bins + 1), dtype=np.int64)
    np.add.at(diff, (rows[visible], first[visible]), 1)
    np.add.at(diff, (rows[visible], last[visible] + 1), -1)
    counts = np.cumsum(diff, axis=1)[:, :value_bins]

    return HistogramGrid(variable=variable, time_edges=time_edges, value_edges=value_edges, counts=counts)


# ── Phase-space error map ───────────────────────────────────────────────


@dataclass(frozen=True)
class ErrorGridSpec:
    theta_min: float = 0.0
    theta_max: float = math.pi / 2
    omega_min: float = 0.0
    omega_max: float = 0.5
    nodes: int = 64

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Grid axes and the flattened (nodes², 2) state batch, θ varying slowest."""
        theta = np.linspace(self.theta_min, self.theta_max, self.nodes)
        omega = np.linspace(self.omega_min, self.omega_max, self.nodes)
        T, W = np.meshgrid(theta, omega, indexing="ij")
        return theta, omega, np.stack([T.ravel(), W.ravel()], axis=1)


@dataclass
class ErrorField:
    """Squared norms on a (θ, θ̇) grid, each of shape (nodes, nodes)."""

    theta: np.ndarray
    omega: np.ndarray
    r_el: np.ndarray
    r_nv: np.ndarray
    r_diff: np.ndarray
    coarse_dt: float = 0.0
    extra: dict = field(default_factory=dict)

    def columns(self) -> dict[str, np.ndarray]:
        T, W = np.meshgrid(self.theta, self.omega, indexing="ij")
        return {
            "theta": T.ravel(),
            "omega": W.ravel(),
            "R_EL": self.r_el.ravel(),
            "R_NV": self.r_nv.ravel(),
            "R_Diff": self.r_diff.ravel(),
        }

    def summary(self) -> dict[str, float]:
        med_el = float(np.median(self.r_el))
        med_diff = float(np.median(self.r_diff))
        return {
            "coarse_dt": self.coarse_dt,
            "median_r_el": med_el,
            "median_r_nv": float(np.median(self.r_nv)),
            "median_r_diff": med_diff,
            "max_r_diff": float(self.r_diff.max()),
            "rdiff_ratio": med_diff / med_el if med_el > 0 else math.inf,
        }


def leading_euler_error(system: DynamicalSystem, states: np.ndarray, dt: float) -> np.ndarray:
    """½ (∇f) f Δt², the leading local error of one Euler step."""
    jac = system.jacobian(states)
    f = system.f(states)
    return 0.5 * np.einsum("nij,nj->ni", jac, f) * dt * dt


def error_map(model, spec: ErrorGridSpec | None = None) -> ErrorField:
    """Compare the learned correction of a 1-link-pendulum Euler model with the leading Euler error."""
    from neurvec import correction

    spec = spec or ErrorGridSpec()
    meta = model.meta
    if meta.system != SystemId.K_LINK_PENDULUM.value or int(meta.params.get("links", 0)) != 1:
        raise ModelSystemMismatch(f"error map needs a 1-link pendulum model, got {meta.system} {meta.params}")
    if meta.scheme != SolverScheme.EULER.value:
        raise ModelSystemMismatch(f"error map needs an Euler model, got {meta.scheme}")
    system = make_system(meta.system, meta.params)
    if model.d != system.dim:
        raise ModelSystemMismatch(f"model dimension {model.d} != system dimension {system.dim}")

    theta, omega, states = spec.points()
    dt = meta.coarse_dt
    lead = leading_euler_error(system, states, dt)
    learned = correction(model, states)
    shape = (spec.nodes, spec.nodes)
    field_ = ErrorField(
        theta=theta,
        omega=omega,
        r_el=np.sum(lead * lead, axis=1).reshape(shape),
        r_nv=np.sum(learned * learned, axis=1).reshape(shape),
        r_diff=np.sum((lead - learned) ** 2, axis=1).reshape(shape),
        coarse_dt=dt,
    )
    logger.info(
        "Error map on %dx%d grid: median R_EL=%.3e, median R_Diff=%.3e",
        spec.nodes, spec.nodes, np.median(field_.r_el), np.median(field_.r_diff),
    )
    return field_


# ── Output ──────────────────────────────────────────────────────────────


def write_table(path: str | Path, columns: dict[str, np.ndarray]) -> Path:
    """One header line of column names, then whitespace-separated rows at full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c, dtype=np.float64).ravel() for c in columns.values()])
    np.savetxt(path, data, fmt="%.17g", header=" ".join(columns), comments="")
    return path

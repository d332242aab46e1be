"""
Trajectory datasets: generation, persistence, splitting and description.

A dataset is a batch of trajectories integrated with a fine generation
step δ and recorded every η.  Step counts are kept as integers so the time
axis is ``index · η`` with no accumulated float drift.  Files use the
shared container with magic ``NVDS``.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

from container import peek_magic, read_container, write_container
from errors import BadMagic, DimensionMismatch, Divergence, EmptySplit, InvalidConfigError
from ode_systems import make_rng, make_system, sample_initial
from solvers import IntegrationPlan, Trajectory, integrate, parse_scheme

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"NVDS"
DATASET_FORMAT_VERSION = 1

ROLES = ("train", "test", "simulation")

_RATIO_TOL = 1e-9


def _steps(num: float, den: float, what: str) -> int:
    ratio = int(round(num / den))
    if ratio < 1 or abs(ratio * den - num) > _RATIO_TOL * num:
        raise InvalidConfigError(f"{what}: {num:g} is not a positive integer multiple of {den:g}")
    return ratio


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to regenerate a dataset bit-for-bit."""

    system: str
    count: int
    delta: float
    scheme: str
    duration: float
    eta: float
    seed: int
    role: str = "train"
    params: dict[str, Any] = field(default_factory=dict)
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # YAML reads "1e-3" as a string.
        try:
            for name in ("delta", "duration", "eta"):
                object.__setattr__(self, name, float(getattr(self, name)))
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"dataset {name} must be a number: {exc}") from exc
        if self.role not in ROLES:
            raise InvalidConfigError(f"role must be one of {', '.join(ROLES)}, got {self.role!r}")
        if int(self.count) < 1:
            raise InvalidConfigError(f"count must be >= 1, got {self.count}")
        if not self.delta > 0 or not self.eta > 0 or not self.duration > 0:
            raise InvalidConfigError("delta, eta and duration must all be > 0")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "scheme", parse_scheme(self.scheme).value)
        # Both ratios must be exact integers.
        _ = (self.steps_per_sample, self.n_intervals)

    @property
    def steps_per_sample(self) -> int:
        return _steps(self.eta, self.delta, "eta / delta")

    @property
    def n_intervals(self) -> int:
        return _steps(self.duration, self.eta, "duration / eta")

    @property
    def n_samples(self) -> int:
        return self.n_intervals + 1

    @property
    def n_steps(self) -> int:
        return self.n_intervals * self.steps_per_sample

    def plan(self) -> IntegrationPlan:
        return IntegrationPlan(dt=self.delta, n_steps=self.n_steps, sample_every=self.steps_per_sample)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "DatasetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown dataset key(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class TrajectoryDataset:
    """``states`` has shape (N, samples, d); ``indices`` are the original trajectory numbers."""

    config: DatasetConfig
    times: np.ndarray
    states: np.ndarray
    indices: np.ndarray

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def as_trajectory(self) -> Trajectory:
        return Trajectory(times=self.times, states=np.ascontiguousarray(self.states.transpose(1, 0, 2)))

    def initial_states(self) -> np.ndarray:
        return np.ascontiguousarray(self.states[:, 0, :])

    def subset(self, positions: np.ndarray, **provenance: Any) -> "TrajectoryDataset":
        positions = np.asarray(positions, dtype=np.int64)
        config = replace(
            self.config,
            count=len(positions),
            provenance={**self.config.provenance, **provenance},
        )
        return TrajectoryDataset(
            config=config,
            times=self.times.copy(),
            states=self.states[positions].copy(),
            indices=self.indices[positions].copy(),
        )

    @classmethod
    def from_trajectory(cls, config: DatasetConfig, traj: Trajectory) -> "TrajectoryDataset":
        return cls(
            config=config,
            times=np.asarray(traj.times, dtype=np.float64),
            states=np.ascontiguousarray(traj.states.transpose(1, 0, 2)),
            indices=np.arange(traj.batch, dtype=np.int64),
        )


# ── Generation ──────────────────────────────────────────────────────────


def generate(config: DatasetConfig, workers: int = 1) -> TrajectoryDataset:
    """Sample initial states with ``config.seed`` and integrate them with (scheme, δ), recording every η."""
    system = make_system(config.system, config.params)
    config = replace(config, params=system.params_dict())
    scheme = parse_scheme(config.scheme)
    plan = config.plan()
    logger.info(
        "Generating %s %s set: N=%d, %s δ=%g, T=%g, η=%g (%d steps, %d samples each)",
        config.system, config.role, config.count, scheme.value,
        config.delta, config.duration, config.eta, plan.n_steps, plan.n_samples,
    )
    init = sample_initial(system, config.count, config.seed)
    try:
        traj = integrate(scheme, system, init, plan, workers=workers)
    except Divergence as exc:
        logger.error(
            "Generation aborted: trajectory %d diverged at step %d", exc.trajectory, exc.step
        )
        raise
    traj.times = np.arange(config.n_samples) * config.eta
    return TrajectoryDataset.from_trajectory(config, traj)


# ── Persistence ─────────────────────────────────────────────────────────


def save(dataset: TrajectoryDataset, path: str) -> int:
    """Write ``dataset``; returns the container checksum."""
    header = {
        "kind": "trajectory-dataset",
        "config": dataset.config.to_dict(),
        "count": dataset.count,
        "samples": len(dataset.times),
        "dim": dataset.dim,
    }
    tensors = [
        ("times", dataset.times),
        ("states", dataset.states),
        ("indices", dataset.indices.astype(np.float64)),
    ]
    checksum = write_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION, header, tensors)
    logger.info("Saved %d trajectories to %s (checksum %016x)", dataset.count, path, checksum)
    return checksum


def load(path: str) -> TrajectoryDataset:
    header, tensors, _ = read_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION)
    config = DatasetConfig(**header["config"])
    times = tensors["times"]
    states = tensors["states"]
    if states.ndim != 3 or states.shape[1] != times.shape[0]:
        raise DimensionMismatch(f"{path}: states {states.shape} do not match {times.shape[0]} sample times")
    if states.shape[0] != header["count"] or states.shape[2] != header["dim"]:
        raise DimensionMismatch(f"{path}: tensor shapes disagree with header")
    return TrajectoryDataset(
        config=config,
        times=times,
        states=states,
        indices=tensors["indices"].astype(np.int64),
    )


def dataset_checksum(path: str) -> int:
    return read_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION)[2]


# ── Split ───────────────────────────────────────────────────────────────


def split(
    dataset: TrajectoryDataset,
    fraction: float,
    seed: int,
) -> tuple[TrajectoryDataset, TrajectoryDataset]:
    """Split by whole trajectories; ``fraction`` of them go to the first part."""
    if not 0.0 < fraction < 1.0:
        raise InvalidConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    n = dataset.count
    n_first = int(round(fraction * n))
    if n_first == 0 or n_first == n:
        raise EmptySplit(f"fraction {fraction} of {n} trajectories leaves one side empty")
    order = make_rng(seed).permutation(n)
    first = np.sort(order[:n_first])
    second = np.sort(order[n_first:])
    origin = {"split_of": n, "split_seed": int(seed), "split_fraction": float(fraction)}
    return (
        dataset.subset(first, **origin, split_part=0),
        dataset.subset(second, **origin, split_part=1),
    )


# ── Describe ────────────────────────────────────────────────────────────


def describe(path: str) -> dict[str, Any]:
    """Summary of a dataset or model file: config, sizes and payload checksum."""
    from neurvec import MODEL_FORMAT_VERSION, MODEL_MAGIC

    magic = peek_magic(path)
    if magic == DATASET_MAGIC:
        header, tensors, checksum = read_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION)
        return {
            "kind": header["kind"],
            "format_version": DATASET_FORMAT_VERSION,
            "checksum": f"{checksum:016x}",
            "trajectories": header["count"],
            "samples_per_trajectory": header["samples"],
            "dim": header["dim"],
            "time_range": [float(tensors["times"][0]), float(tensors["times"][-1])],
            "config": header["config"],
        }
    if magic == MODEL_MAGIC:
        header, _, checksum = read_container(path, MODEL_MAGIC, MODEL_FORMAT_VERSION)
        return {
            "kind": header["kind"],
            "format_version": MODEL_FORMAT_VERSION,
            "checksum": f"{checksum:016x}",
            "dim": header["d"],
            "width": header["width"],
            "meta": header["meta"],
        }
    raise BadMagic(f"{path}: not a dataset or model file (magic {magic!r})")


def format_description(path: str, summary: dict[str, Any]) -> str:
    lines = ["=" * 60, f"  {path}", "=" * 60]
    for key, value in summary.items():
        if isinstance(value, dict):
            lines.append(f"  {key}:")
            lines.extend(f"    {k}: {v}" for k, v in value.items())
        else:
            lines.append(f"  {key}: {value}")
    lines.append("=" * 60)
    return "\n".join(lines)

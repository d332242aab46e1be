"""
NeurVec corrector network.

One hidden layer with a trainable, layer-shared rational activation::

    NeurVec(u) = Wa · σ(W1 u + b1),   σ(x) = (a3 x³ + a2 x² + a1 x + a0) / (b2 x² + b1 x + b0)

The output layer has no bias, so a model whose ``Wa`` is zero outputs
exactly zero.  Gradients are analytic (no autodiff framework); the
optimizer is Adam with a projection that keeps the activation's
denominator strictly positive.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import TYPE_CHECKING, Any

import numpy as np

from container import read_container, write_container
from errors import (
    DimensionMismatch,
    InvalidConfigError,
    ModelSystemMismatch,
    NonFiniteLoss,
    SamplingMismatch,
    ShapeMismatch,
)
from ode_systems import DynamicalSystem, as_state_batch, make_rng
from solvers import SolverScheme, step_increment

if TYPE_CHECKING:
    from datasets import TrajectoryDataset

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"NVEC"
MODEL_FORMAT_VERSION = 1

# Rational activation coefficients at initialization.
INIT_NUMERATOR = (0.0218, 0.5000, 0.5957, 1.1915)
INIT_DENOMINATOR = (1.0000, 0.0000, 2.3830)

DENOMINATOR_FLOOR = 1e-3
DISCRIMINANT_MARGIN = 1e-6

PARAM_ORDER = ("W1", "b1", "Wa", "a", "b")


@dataclass
class ModelMeta:
    """What a model was trained for; integration refuses any other binding."""

    system: str
    scheme: str
    k: int
    fine_dt: float
    eta: float
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)
    output_scale: float = 1.0

    @property
    def coarse_dt(self) -> float:
        return self.k * self.fine_dt

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelMeta":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class NeurVecModel:
    W1: np.ndarray  # (width, d)
    b1: np.ndarray  # (width,)
    Wa: np.ndarray  # (d, width)
    a: np.ndarray   # numerator a0..a3
    b: np.ndarray   # denominator b0..b2
    meta: ModelMeta

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable tensor, in persistence order."""
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "NeurVecModel":
        return NeurVecModel(
            **{name: arr.copy() for name, arr in self.parameters().items()},
            meta=ModelMeta.from_dict(self.meta.to_dict()),
        )


# ── Construction ────────────────────────────────────────────────────────


def init_model(d: int, width: int, meta: ModelMeta, rng: np.random.Generator) -> NeurVecModel:
    """W1, b1 ~ U[±1/√d], Wa ~ U[±1/√width]; rational coefficients at their fixed initial values."""
    lim_in = 1.0 / math.sqrt(d)
    lim_out = 1.0 / math.sqrt(width)
    W1 = rng.uniform(-lim_in, lim_in, size=(width, d))
    b1 = rng.uniform(-lim_in, lim_in, size=width)
    Wa = rng.uniform(-lim_out, lim_out, size=(d, width))
    return NeurVecModel(
        W1=W1, b1=b1, Wa=Wa,
        a=np.array(INIT_NUMERATOR), b=np.array(INIT_DENOMINATOR),
        meta=meta,
    )


def zero_model(d: int, width: int, meta: ModelMeta) -> NeurVecModel:
    """A model whose output is identically zero."""
    return NeurVecModel(
        W1=np.zeros((width, d)), b1=np.zeros(width), Wa=np.zeros((d, width)),
        a=np.array(INIT_NUMERATOR), b=np.array(INIT_DENOMINATOR),
        meta=meta,
    )


# ── Forward / backward ──────────────────────────────────────────────────


def rational(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    numerator = ((a[3] * x + a[2]) * x + a[1]) * x + a[0]
    denominator = (b[2] * x + b[1]) * x + b[0]
    return numerator / denominator


def forward(model: NeurVecModel, states: np.ndarray) -> np.ndarray:
    """Wa · σ(W1 u + b1), row-wise."""
    u = as_state_batch(states, model.d)
    z = u @ model.W1.T + model.b1
    return rational(z, model.a, model.b) @ model.Wa.T


def correction(model: NeurVecModel, states: np.ndarray) -> np.ndarray:
    """The vector added to each macro-step: ``output_scale · forward(u)``."""
    out = forward(model, states)
    if model.meta.output_scale != 1.0:
        out = model.meta.output_scale * out
    return out


def loss_and_grads(
    model: NeurVecModel,
    inputs: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """
    Mean over samples of the squared residual norm, and its exact gradient.

    Returns ``(loss, grads)`` where ``grads`` has the same keys and shapes
    as :meth:`NeurVecModel.parameters`.
    """
    if inputs.shape != targets.shape or inputs.ndim != 2 or inputs.shape[1] != model.d:
        raise ShapeMismatch(
            f"inputs {inputs.shape} and targets {targets.shape} must both be (G, {model.d})"
        )
    G = inputs.shape[0]
    a, b = model.a, model.b

    z = inputs @ model.W1.T + model.b1
    P = ((a[3] * z + a[2]) * z + a[1]) * z + a[0]
    Q = (b[2] * z + b[1]) * z + b[0]
    s = P / Q
    residual = s @ model.Wa.T - targets
    loss = float(np.sum(residual * residual) / G)

    dy = (2.0 / G) * residual
    g_Wa = dy.T @ s
    ds = dy @ model.Wa

    dP = (3.0 * a[3] * z + 2.0 * a[2]) * z + a[1]
    dQ = 2.0 * b[2] * z + b[1]
    dz = ds * (dP - s * dQ) / Q
    g_W1 = dz.T @ inputs
    g_b1 = dz.sum(axis=0)

    w = ds / Q
    z2 = z * z
    g_a = np.array([w.sum(), (w * z).sum(), (w * z2).sum(), (w * z2 * z).sum()])
    ws = w * s
    g_b = -np.array([ws.sum(), (ws * z).sum(), (ws * z2).sum()])

    return loss, {"W1": g_W1, "b1": g_b1, "Wa": g_Wa, "a": g_a, "b": g_b}


def mean_loss(model: NeurVecModel, inputs: np.ndarray, targets: np.ndarray, chunk: int = 8192) -> float:
    """Full-data loss, evaluated in chunks."""
    total = 0.0
    for lo in range(0, inputs.shape[0], chunk):
        r = forward(model, inputs[lo:lo + chunk]) - targets[lo:lo + chunk]
        total += float(np.sum(r * r))
    return total / max(inputs.shape[0], 1)


# ── Optimizer ───────────────────────────────────────────────────────────


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: NeurVecModel, **hyper: float) -> "AdamState":
        params = model.parameters()
        return cls(
            **hyper,
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
        )


def project_denominator(b: np.ndarray) -> np.ndarray:
    """Keep b2·x² + b1·x + b0 > 0 for every real x (in place)."""
    if b[2] <= DENOMINATOR_FLOOR:
        b[2] = DENOMINATOR_FLOOR
    if b[0] <= DENOMINATOR_FLOOR:
        b[0] = DENOMINATOR_FLOOR
    limit = 4.0 * b[2] * b[0] * (1.0 - DISCRIMINANT_MARGIN)
    if b[1] * b[1] >= limit:
        b[1] = math.copysign(math.sqrt(limit) * (1.0 - DISCRIMINANT_MARGIN), b[1])
    return b


def adam_step(
    model: NeurVecModel,
    adam: AdamState,
    grads: dict[str, np.ndarray],
    lr: float | None = None,
) -> tuple[NeurVecModel, AdamState]:
    """One bias-corrected Adam update followed by the denominator projection."""
    lr = adam.lr if lr is None else lr
    adam.t += 1
    bc1 = 1.0 - adam.beta1 ** adam.t
    bc2 = 1.0 - adam.beta2 ** adam.t
    for name, param in model.parameters().items():
        g = grads[name]
        m = adam.m[name]
        v = adam.v[name]
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * (g * g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + adam.eps)
    project_denominator(model.b)
    return model, adam


# ── Training data ───────────────────────────────────────────────────────


@dataclass
class TrainingPairs:
    """Inputs u_{kn} and residual targets u_{k(n+1)} − u_{kn} − S(f, u_{kn}, kΔt)."""

    inputs: np.ndarray
    targets: np.ndarray
    system: str
    params: dict[str, Any]
    scheme: str
    k: int
    fine_dt: float
    eta: float
    output_scale: float = 1.0

    def __len__(self) -> int:
        return self.inputs.shape[0]


def build_training_pairs(
    dataset: "TrajectoryDataset",
    scheme: SolverScheme,
    system: DynamicalSystem,
    k: int,
    normalize: bool = False,
) -> TrainingPairs:
    """One pair per consecutive sample pair of every trajectory, pooled."""
    cfg = dataset.config
    if system.system_id is not None and cfg.system != system.system_id.value:
        raise ModelSystemMismatch(f"dataset holds {cfg.system}, not {system.system_id.value}")
    if k < 1:
        raise InvalidConfigError(f"k must be >= 1, got {k}")
    coarse_dt = k * cfg.delta
    if abs(cfg.eta - coarse_dt) > 1e-12 * cfg.eta:
        raise SamplingMismatch(
            f"sampling interval η={cfg.eta:g} differs from k·Δt={k}·{cfg.delta:g}={coarse_dt:g}"
        )

    states = dataset.states
    d = states.shape[2]
    if d != system.dim:
        raise DimensionMismatch(f"dataset state dimension {d} != system dimension {system.dim}")
    inputs = np.ascontiguousarray(states[:, :-1, :].reshape(-1, d))
    following = states[:, 1:, :].reshape(-1, d)
    targets = following - inputs - step_increment(scheme, system, inputs, coarse_dt)
    output_scale = 1.0
    if normalize:
        output_scale = coarse_dt
        targets = targets / coarse_dt
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
        raise InvalidConfigError("training pairs contain non-finite values")

    logger.info(
        "Built %d training pairs (%s, %s, k=%d, kΔt=%g)",
        inputs.shape[0], cfg.system, scheme.value, k, coarse_dt,
    )
    return TrainingPairs(
        inputs=inputs, targets=np.ascontiguousarray(targets),
        system=cfg.system, params=system.params_dict() or dict(cfg.params), scheme=scheme.value,
        k=int(k), fine_dt=cfg.delta, eta=cfg.eta, output_scale=output_scale,
    )


# ── Training ────────────────────────────────────────────────────────────


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    batch_size: int = 1024
    width: int = 1024
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "constant"
    normalize_targets: bool = False

    def __post_init__(self) -> None:
        try:
            for name in ("lr", "beta1", "beta2", "eps"):
                setattr(self, name, float(getattr(self, name)))
            for name in ("epochs", "batch_size", "width"):
                setattr(self, name, int(getattr(self, name)))
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"train {name} has the wrong type: {exc}") from exc
        self.normalize_targets = bool(self.normalize_targets)
        if self.schedule not in ("constant", "cosine"):
            raise InvalidConfigError(f"schedule must be 'constant' or 'cosine', got {self.schedule!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.width < 1:
            raise InvalidConfigError("epochs must be >= 0, batch_size and width >= 1")

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class TrainingReport:
    epoch_losses: list[float]
    final_loss: float
    wall_time: float
    pairs: int
    seed: int
    config: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _learning_rate(config: TrainConfig, step: int, total: int) -> float:
    if config.schedule == "cosine" and total > 0:
        return config.lr * 0.5 * (1.0 + math.cos(math.pi * step / total))
    return config.lr


def train(
    pairs: TrainingPairs,
    config: TrainConfig,
    seed: int,
) -> tuple[NeurVecModel, TrainingReport]:
    """Mini-batch Adam on the residual objective; deterministic given ``seed``."""
    G = len(pairs)
    if G < config.batch_size:
        raise InvalidConfigError(f"{G} training pairs is fewer than batch_size={config.batch_size}")

    meta = ModelMeta(
        system=pairs.system, scheme=pairs.scheme, k=pairs.k,
        fine_dt=pairs.fine_dt, eta=pairs.eta, seed=int(seed),
        params=dict(pairs.params), output_scale=pairs.output_scale,
    )
    rng = make_rng(seed)
    d = pairs.inputs.shape[1]
    model = init_model(d, config.width, meta, rng)
    adam = AdamState.for_model(model, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    n_batches = math.ceil(G / config.batch_size)
    total_steps = config.epochs * n_batches
    log_every = max(1, config.epochs // 20)
    epoch_losses: list[float] = []
    step = 0
    started = time.perf_counter()

    logger.info(
        "Training NeurVec: %d pairs, d=%d, width=%d, %d epochs x %d batches",
        G, d, config.width, config.epochs, n_batches,
    )
    for epoch in range(config.epochs):
        order = rng.permutation(G)
        running = 0.0
        for batch in range(n_batches):
            idx = order[batch * config.batch_size:(batch + 1) * config.batch_size]
            loss, grads = loss_and_grads(model, pairs.inputs[idx], pairs.targets[idx])
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(epoch, batch)
            adam_step(model, adam, grads, lr=_learning_rate(config, step, total_steps))
            running += loss * len(idx)
            step += 1
        epoch_losses.append(running / G)
        if (epoch + 1) % log_every == 0 or epoch == config.epochs - 1:
            logger.info("epoch %d/%d  loss %.3e", epoch + 1, config.epochs, epoch_losses[-1])

    final = mean_loss(model, pairs.inputs, pairs.targets)
    report = TrainingReport(
        epoch_losses=epoch_losses,
        final_loss=final,
        wall_time=time.perf_counter() - started,
        pairs=G,
        seed=int(seed),
        config=asdict(config),
    )
    logger.info("Training done: final loss %.3e in %.1fs", final, report.wall_time)
    return model, report


# ── Persistence ─────────────────────────────────────────────────────────


def save_model(model: NeurVecModel, path: str) -> int:
    header = {
        "kind": "neurvec-model",
        "d": model.d,
        "width": model.width,
        "meta": model.meta.to_dict(),
    }
    return write_container(path, MODEL_MAGIC, MODEL_FORMAT_VERSION, header, list(model.parameters().items()))


def load_model(path: str) -> NeurVecModel:
    header, tensors, _ = read_container(path, MODEL_MAGIC, MODEL_FORMAT_VERSION)
    meta = ModelMeta.from_dict(header["meta"])
    model = NeurVecModel(**{name: tensors[name] for name in PARAM_ORDER}, meta=meta)
    if model.d != header["d"] or model.width != header["width"]:
        raise DimensionMismatch(f"{path}: tensor shapes disagree with header")
    return model


def model_checksum(path: str) -> int:
    return read_container(path, MODEL_MAGIC, MODEL_FORMAT_VERSION)[2]


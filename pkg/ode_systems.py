"""
Benchmark dynamical systems.

Each system exposes its state layout, right-hand side ``f(u)`` evaluated
row-wise over an ``(N, d)`` state batch, optional conserved energy and
analytic Jacobian, and an initial-condition sampler.  All arithmetic is
float64; a state batch is a plain C-contiguous ``np.ndarray`` of shape
``(N, d)`` whose rows are advanced synchronously.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any

import numpy as np

from errors import (
    DimensionMismatch,
    Divergence,
    InvalidConfigError,
    RejectionBudgetExceeded,
    SingularMassMatrix,
    UnsupportedSystem,
)

logger = logging.getLogger(__name__)

StateBatch = np.ndarray

DIVERGENCE_LIMIT = 1e8
PIVOT_TOL = 1e-12
REJECTION_BUDGET = 10_000  # draws allowed per requested Hénon–Heiles sample

# Spring-chain masses and spring stiffnesses (20 masses, 21 springs).
SPRING_MASSES: tuple[float, ...] = (
    0.900, 0.938, 0.925, 0.787, 0.667,
    1.348, 0.776, 0.692, 0.941, 0.538,
    1.215, 0.821, 1.121, 0.875, 1.456,
    1.111, 1.125, 1.431, 0.663, 1.222,
)
SPRING_STIFFNESS: tuple[float, ...] = (
    3.900, 3.508, 5.651, 5.533, 3.664,
    4.373, 2.555, 5.239, 6.024, 6.942,
    5.073, 3.941, 4.505, 4.744, 3.805,
    4.848, 3.477, 3.405, 2.499, 4.735, 4.891,
)


class SystemId(Enum):
    SPRING_CHAIN = "spring-chain"
    HENON_HEILES = "henon-heiles"
    ELASTIC_PENDULUM = "elastic-pendulum"
    K_LINK_PENDULUM = "k-link-pendulum"


# ── Parameters ──────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SpringChainParams:
    masses: tuple[float, ...] = SPRING_MASSES
    stiffness: tuple[float, ...] = SPRING_STIFFNESS

    def __post_init__(self) -> None:
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        object.__setattr__(self, "stiffness", tuple(float(k) for k in self.stiffness))
        if not self.masses:
            raise InvalidConfigError("spring-chain needs at least one mass")
        if len(self.stiffness) != len(self.masses) + 1:
            raise InvalidConfigError(
                f"spring-chain with {len(self.masses)} masses needs "
                f"{len(self.masses) + 1} stiffnesses, got {len(self.stiffness)}"
            )
        if min(self.masses) <= 0 or min(self.stiffness) <= 0:
            raise InvalidConfigError("spring-chain masses and stiffnesses must be positive")

    @property
    def d(self) -> int:
        return len(self.masses)


@dataclass(frozen=True)
class HenonHeilesParams:
    lam: float = 1.0


@dataclass(frozen=True)
class ElasticPendulumParams:
    k: float = 40.0
    m: float = 1.0
    l0: float = 10.0
    g: float = 9.8


@dataclass(frozen=True)
class KLinkPendulumParams:
    links: int = 2
    g: float = 9.8

    def __post_init__(self) -> None:
        if int(self.links) < 1:
            raise InvalidConfigError("k-link pendulum needs at least one link")
        object.__setattr__(self, "links", int(self.links))


# ── Systems ─────────────────────────────────────────────────────────────


class DynamicalSystem(ABC):
    """Autonomous ODE du/dt = f(u) over a batch of states."""

    system_id: SystemId | None = None
    dim: int

    @abstractmethod
    def f(self, u: np.ndarray) -> np.ndarray:
        """Right-hand side, row-wise, without input validation."""

    def hamiltonian(self, u: np.ndarray) -> np.ndarray:
        raise UnsupportedSystem(f"{self.name} has no implemented conserved energy")

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        raise UnsupportedSystem(f"{self.name} has no analytic Jacobian")

    def invalid_rows(self, u: np.ndarray) -> np.ndarray | None:
        """Boolean mask of rows outside the system's physical domain (None when unconstrained)."""
        return None

    def params_dict(self) -> dict[str, Any]:
        return {}

    @property
    def name(self) -> str:
        return self.system_id.value if self.system_id else type(self).__name__


class SpringChain(DynamicalSystem):
    """d masses between two walls, state (q_1..q_d, p_1..p_d)."""

    system_id = SystemId.SPRING_CHAIN

    def __init__(self, params: SpringChainParams | None = None) -> None:
        self.params = params or SpringChainParams()
        self.d = self.params.d
        self.dim = 2 * self.d
        self._m = np.asarray(self.params.masses)
        self._k = np.asarray(self.params.stiffness)

    def f(self, u: np.ndarray) -> np.ndarray:
        d = self.d
        q, p = u[:, :d], u[:, d:]
        n = u.shape[0]
        zero = np.zeros((n, 1))
        qpad = np.concatenate([zero, q, zero], axis=1)
        dq = p / self._m
        dp = self._k[:-1] * (qpad[:, :-2] - q) + self._k[1:] * (qpad[:, 2:] - q)
        return np.concatenate([dq, dp], axis=1)

    def hamiltonian(self, u: np.ndarray) -> np.ndarray:
        d = self.d
        q, p = u[:, :d], u[:, d:]
        zero = np.zeros((u.shape[0], 1))
        stretch = np.diff(np.concatenate([zero, q, zero], axis=1), axis=1)
        kinetic = np.sum(p * p / (2.0 * self._m), axis=1)
        potential = 0.5 * np.sum(self._k * stretch * stretch, axis=1)
        return kinetic + potential

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        d = self.d
        jac = np.zeros((self.dim, self.dim))
        jac[:d, d:] = np.diag(1.0 / self._m)
        k = self._k
        jac[d:, :d] = (
            np.diag(-(k[:-1] + k[1:]))
            + np.diag(k[1:-1], 1)
            + np.diag(k[1:-1], -1)
        )
        return np.broadcast_to(jac, (u.shape[0], self.dim, self.dim)).copy()

    def params_dict(self) -> dict[str, Any]:
        return {"masses": list(self.params.masses), "stiffness": list(self.params.stiffness)}


class HenonHeiles(DynamicalSystem):
    """State (q_x, q_y, p_x, p_y)."""

    system_id = SystemId.HENON_HEILES
    dim = 4

    def __init__(self, params: HenonHeilesParams | None = None) -> None:
        self.params = params or HenonHeilesParams()

    def f(self, u: np.ndarray) -> np.ndarray:
        lam = self.params.lam
        qx, qy, px, py = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        return np.stack(
            [
                px,
                py,
                -qx - 2.0 * lam * qx * qy,
                -qy - lam * (qx * qx - qy * qy),
            ],
            axis=1,
        )

    def hamiltonian(self, u: np.ndarray) -> np.ndarray:
        # Cubic q_y term: -dH/dq_y must reproduce dp_y/dt above.
        lam = self.params.lam
        qx, qy, px, py = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        return (
            0.5 * (px * px + py * py)
            + 0.5 * (qx * qx + qy * qy)
            + lam * (qx * qx * qy - qy ** 3 / 3.0)
        )

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        lam = self.params.lam
        qx, qy = u[:, 0], u[:, 1]
        jac = np.zeros((u.shape[0], 4, 4))
        jac[:, 0, 2] = 1.0
        jac[:, 1, 3] = 1.0
        jac[:, 2, 0] = -1.0 - 2.0 * lam * qy
        jac[:, 2, 1] = -2.0 * lam * qx
        jac[:, 3, 0] = -2.0 * lam * qx
        jac[:, 3, 1] = -1.0 + 2.0 * lam * qy
        return jac

    def params_dict(self) -> dict[str, Any]:
        return asdict(self.params)


class ElasticPendulum(DynamicalSystem):
    """State (θ, r, θ̇, ṙ); r must stay positive."""

    system_id = SystemId.ELASTIC_PENDULUM
    dim = 4

    def __init__(self, params: ElasticPendulumParams | None = None) -> None:
        self.params = params or ElasticPendulumParams()

    def f(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        theta, r, w, v = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        return np.stack(
            [
                w,
                v,
                (-p.g * np.sin(theta) - w * v) / r,
                r * w * w - p.k / p.m * (r - p.l0) + p.g * np.cos(theta),
            ],
            axis=1,
        )

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        theta, r, w, v = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        jac = np.zeros((u.shape[0], 4, 4))
        jac[:, 0, 2] = 1.0
        jac[:, 1, 3] = 1.0
        jac[:, 2, 0] = -p.g * np.cos(theta) / r
        jac[:, 2, 1] = (p.g * np.sin(theta) + w * v) / (r * r)
        jac[:, 2, 2] = -v / r
        jac[:, 2, 3] = -w / r
        jac[:, 3, 0] = -p.g * np.sin(theta)
        jac[:, 3, 1] = w * w - p.k / p.m
        jac[:, 3, 2] = 2.0 * r * w
        return jac

    def invalid_rows(self, u: np.ndarray) -> np.ndarray:
        return ~(u[:, 1] > 0.0)

    def params_dict(self) -> dict[str, Any]:
        return asdict(self.params)


class KLinkPendulum(DynamicalSystem):
    """State (θ_1..θ_K, θ̇_1..θ̇_K); unit rods and bobs."""

    system_id = SystemId.K_LINK_PENDULUM

    def __init__(self, params: KLinkPendulumParams | None = None) -> None:
        self.params = params or KLinkPendulumParams()
        self.links = self.params.links
        self.dim = 2 * self.links

    def f(self, u: np.ndarray) -> np.ndarray:
        K = self.links
        theta, omega = u[:, :K], u[:, K:]
        if K == 1:
            return np.concatenate([omega, -self.params.g * np.sin(theta)], axis=1)
        A, b = klink_matrix(self.params, theta, omega)
        return np.concatenate([omega, solve_pivoted(A, b)], axis=1)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        if self.links != 1:
            raise UnsupportedSystem("analytic Jacobian is only implemented for the 1-link pendulum")
        jac = np.zeros((u.shape[0], 2, 2))
        jac[:, 0, 1] = 1.0
        jac[:, 1, 0] = -self.params.g * np.cos(u[:, 0])
        return jac

    def params_dict(self) -> dict[str, Any]:
        return asdict(self.params)


# ── Systems with closed-form flows (solver verification) ────────────────


class LinearSystem(DynamicalSystem):
    """du/dt = rate · u, elementwise; u(t) = u0 · exp(rate · t)."""

    def __init__(self, rate: float = -1.0, dim: int = 1) -> None:
        self.rate = float(rate)
        self.dim = dim

    def f(self, u: np.ndarray) -> np.ndarray:
        return self.rate * u

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.rate * np.eye(self.dim), (u.shape[0], self.dim, self.dim)).copy()

    def exact(self, u0: np.ndarray, t: float) -> np.ndarray:
        return np.asarray(u0) * np.exp(self.rate * t)


class HarmonicOscillator(DynamicalSystem):
    """State (x, v) with dx/dt = v, dv/dt = −ω² x."""

    dim = 2

    def __init__(self, omega: float = 1.0) -> None:
        self.omega = float(omega)

    def f(self, u: np.ndarray) -> np.ndarray:
        return np.stack([u[:, 1], -self.omega ** 2 * u[:, 0]], axis=1)

    def hamiltonian(self, u: np.ndarray) -> np.ndarray:
        return 0.5 * (u[:, 1] ** 2 + self.omega ** 2 * u[:, 0] ** 2)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        jac = np.zeros((u.shape[0], 2, 2))
        jac[:, 0, 1] = 1.0
        jac[:, 1, 0] = -self.omega ** 2
        return jac

    def exact(self, u0: np.ndarray, t: float) -> np.ndarray:
        u0 = as_state_batch(u0, 2)
        w = self.omega
        c, s = np.cos(w * t), np.sin(w * t)
        x = u0[:, 0] * c + u0[:, 1] / w * s
        v = -u0[:, 0] * w * s + u0[:, 1] * c
        return np.stack([x, v], axis=1)


# ── K-link mass matrix ──────────────────────────────────────────────────


def klink_matrix(
    params: KLinkPendulumParams,
    theta: np.ndarray,
    theta_dot: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Build the K-link mass matrix ``A`` and forcing vector ``b``.

    ``A[i, j] = c(i, j) cos(θ_i − θ_j)`` with ``c(i, j) = K − max(i, j) + 1``
    (1-based), and ``b_i = −Σ_j c(i, j) θ̇_j² sin(θ_i − θ_j) − (K − i + 1) g sin θ_i``.
    Accepts a single ``(K,)`` angle vector or an ``(N, K)`` batch.
    """
    theta = np.asarray(theta, dtype=np.float64)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    K = params.links
    if theta.shape[1] != K:
        raise DimensionMismatch(f"expected {K} angles, got {theta.shape[1]}")
    omega = (
        np.zeros_like(theta) if theta_dot is None
        else np.atleast_2d(np.asarray(theta_dot, dtype=np.float64))
    )

    idx = np.arange(K)
    c = (K - np.maximum.outer(idx, idx)).astype(np.float64)
    diff = theta[:, :, None] - theta[:, None, :]
    A = c * np.cos(diff)
    b = (
        -np.sum(c * (omega * omega)[:, None, :] * np.sin(diff), axis=2)
        - (K - idx) * params.g * np.sin(theta)
    )
    if single:
        return A[0], b[0]
    return A, b


def solve_pivoted(A: np.ndarray, b: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """
    Solve ``A[n] x[n] = b[n]`` for every batch row by Gaussian elimination
    with partial pivoting.  The loops run over the (small) matrix order;
    each operation is vectorized across the batch.
    """
    A = np.array(A, dtype=np.float64)
    x = np.array(b, dtype=np.float64)
    n, K = x.shape
    rows = np.arange(n)

    for col in range(K):
        piv = col + np.argmax(np.abs(A[:, col:, col]), axis=1)
        pivot = A[rows, piv, col]
        small = np.abs(pivot) < tol
        if np.any(small):
            row = int(np.argmax(small))
            raise SingularMassMatrix(
                f"pivot {abs(pivot[row]):.3e} below {tol:g} in column {col} (batch row {row})"
            )
        top = A[rows, col, :].copy()
        A[rows, col, :] = A[rows, piv, :]
        A[rows, piv, :] = top
        xtop = x[rows, col].copy()
        x[rows, col] = x[rows, piv]
        x[rows, piv] = xtop

        for r in range(col + 1, K):
            factor = A[:, r, col] / A[:, col, col]
            A[:, r, col:] -= factor[:, None] * A[:, col, col:]
            x[:, r] -= factor * x[:, col]

    for r in range(K - 1, -1, -1):
        x[:, r] = (x[:, r] - np.sum(A[:, r, r + 1:] * x[:, r + 1:], axis=1)) / A[:, r, r]
    return x


# ── Public operations ───────────────────────────────────────────────────


def make_system(system_id: str | SystemId, params: dict[str, Any] | None = None) -> DynamicalSystem:
    """Build a system from its id and a (possibly partial) parameter mapping."""
    try:
        sid = SystemId(system_id)
    except ValueError as exc:
        raise InvalidConfigError(
            f"unknown system {system_id!r}; expected one of "
            f"{', '.join(s.value for s in SystemId)}"
        ) from exc
    params = dict(params or {})
    try:
        if sid is SystemId.SPRING_CHAIN:
            return SpringChain(SpringChainParams(**params))
        if sid is SystemId.HENON_HEILES:
            return HenonHeiles(HenonHeilesParams(**params))
        if sid is SystemId.ELASTIC_PENDULUM:
            return ElasticPendulum(ElasticPendulumParams(**params))
        return KLinkPendulum(KLinkPendulumParams(**params))
    except TypeError as exc:
        raise InvalidConfigError(f"bad parameters for {sid.value}: {exc}") from exc


def as_state_batch(states: Any, dim: int) -> np.ndarray:
    """Validate and convert to an ``(N, dim)`` float64 batch."""
    arr = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatch(f"expected states of shape (N, {dim}), got {np.shape(states)}")
    return np.ascontiguousarray(arr)


def rhs(system: DynamicalSystem, states: Any) -> np.ndarray:
    """du/dt evaluated row-wise."""
    return system.f(as_state_batch(states, system.dim))


def energy(system: DynamicalSystem, states: Any) -> np.ndarray:
    """Conserved energy per trajectory (Hénon–Heiles and spring-chain)."""
    return system.hamiltonian(as_state_batch(states, system.dim))


def jacobian(system: DynamicalSystem, states: Any) -> np.ndarray:
    """Analytic ∂f/∂u per row, shape ``(N, d, d)``."""
    return system.jacobian(as_state_batch(states, system.dim))


def check_states(system: DynamicalSystem, states: np.ndarray, step: int, row_offset: int = 0) -> None:
    """Raise :class:`Divergence` if any row is non-finite, beyond the bound, or outside the domain."""
    bad = ~np.all(np.abs(states) <= DIVERGENCE_LIMIT, axis=1)
    invalid = system.invalid_rows(states)
    if invalid is not None:
        bad |= invalid
    if np.any(bad):
        row = int(np.argmax(bad))
        values = states[row]
        if not np.all(np.isfinite(values)):
            detail = "non-finite state"
        elif np.max(np.abs(values)) > DIVERGENCE_LIMIT:
            detail = f"|x| > {DIVERGENCE_LIMIT:g}"
        else:
            detail = "state left the physical domain"
        raise Divergence(step, row + row_offset, detail)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; identical draws on every platform for a given seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def sample_initial(system: DynamicalSystem, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` initial states from the system's benchmark distribution."""
    if count < 1:
        raise InvalidConfigError(f"count must be >= 1, got {count}")
    rng = make_rng(seed)

    if isinstance(system, SpringChain):
        q = rng.uniform(-2.5, 2.5, size=(count, system.d))
        p = rng.uniform(-2.5, 2.5, size=(count, system.d))
        return np.concatenate([q, p], axis=1)

    if isinstance(system, HenonHeiles):
        return _sample_henon_heiles(system, count, rng)

    if isinstance(system, ElasticPendulum):
        states = np.zeros((count, 4))
        states[:, 0] = rng.uniform(0.0, np.pi / 8, size=count)
        states[:, 1] = system.params.l0
        return states

    if isinstance(system, KLinkPendulum):
        K = system.links
        states = np.zeros((count, 2 * K))
        if K == 1:
            states[:, 0] = rng.uniform(0.0, np.pi / 2, size=count)
            states[:, 1] = rng.uniform(0.0, 0.5, size=count)
        else:
            states[:, :K] = rng.uniform(0.0, np.pi / 8, size=(count, K))
        return states

    raise UnsupportedSystem(f"no initial-state distribution for {system.name}")


def _sample_henon_heiles(system: HenonHeiles, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample states with energy in [1/12, 1/6]."""
    budget = REJECTION_BUDGET * count
    drawn = 0
    kept: list[np.ndarray] = []
    have = 0
    while have < count:
        if drawn >= budget:
            raise RejectionBudgetExceeded(
                f"only {have}/{count} Hénon–Heiles states accepted after {drawn} draws"
            )
        chunk = min(max(8 * (count - have), 256), budget - drawn)
        cand = np.stack(
            [
                rng.uniform(-1.0, 1.0, size=chunk),
                rng.uniform(-0.5, 1.0, size=chunk),
                rng.uniform(-1.0, 1.0, size=chunk),
                rng.uniform(-1.0, 1.0, size=chunk),
            ],
            axis=1,
        )
        drawn += chunk
        h = system.hamiltonian(cand)
        ok = cand[(h >= 1.0 / 12.0) & (h <= 1.0 / 6.0)]
        kept.append(ok)
        have += len(ok)
    logger.debug("Hénon–Heiles rejection sampling: %d accepted of %d drawn", have, drawn)
    return np.concatenate(kept, axis=0)[:count]

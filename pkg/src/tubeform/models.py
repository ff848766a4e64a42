"""Domain types: chain-of-integrators agents, declarative drift terms, obstacles.

Drift functions are not arbitrary code. Each agent's drift is a tagged list
of parametric terms (linear state taps, cubics of position combinations,
tanh saturations, time sinusoids, squared-position/tanh cross couplings)
multiplied by a common outer gain. This keeps scenario files declarative,
serializable, and hashable, and makes closed-form Jacobians available for
Lipschitz estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ScenarioError

TERM_FORMS = ("state", "cubic", "tanh", "sin_t", "sq_tanh")


@dataclass(frozen=True)
class BrunovskyDims:
    """Chain order n, spatial dimension d per block, follower count N."""

    n: int
    d: int
    followers: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.followers < 1:
            raise ScenarioError("dims must satisfy n >= 1, d >= 1, followers >= 1")

    @property
    def nd(self) -> int:
        return self.n * self.d

    def block(self, x: np.ndarray, order: int) -> np.ndarray:
        """Block p (1-based) of a chain state laid out as (x_1, ..., x_n)."""
        return x[(order - 1) * self.d : order * self.d]


def chain_matrices(dims: BrunovskyDims) -> tuple[np.ndarray, np.ndarray]:
    """Block upshift matrix A0 and top-order selector G for the chain."""
    n, d, nd = dims.n, dims.d, dims.nd
    a0 = np.zeros((nd, nd))
    for p in range(n - 1):
        a0[p * d : (p + 1) * d, (p + 1) * d : (p + 2) * d] = np.eye(d)
    g = np.zeros((nd, d))
    g[(n - 1) * d :, :] = np.eye(d)
    return a0, g


def chain_derivative(dims: BrunovskyDims, x: np.ndarray, top: np.ndarray) -> np.ndarray:
    """dx/dt for the chain with the given top-order block derivative."""
    d = dims.d
    out = np.empty_like(x)
    out[:-d] = x[d:]
    out[-d:] = top
    return out


@dataclass(frozen=True)
class DriftTerm:
    """One additive term of a drift axis expression.

    form "state":   coeff * x[order, axis]
    form "cubic":   coeff * (sum_a weights[a] * x[order, a])^3
    form "tanh":    coeff * tanh(scale * x[order, axis])
    form "sin_t":   coeff * sin(freq * t + phase)
    form "sq_tanh": coeff * x[order, sq_axis]^2 * tanh(scale * x[order, axis])
    """

    form: str
    coeff: float
    order: int = 1
    axis: int = 0
    scale: float = 1.0
    freq: float = 0.0
    phase: float = 0.0
    weights: tuple[float, ...] = ()
    sq_axis: int = 0

    def __post_init__(self):
        if self.form not in TERM_FORMS:
            raise ScenarioError(f"unknown drift term form {self.form!r}")

    def value(self, dims: BrunovskyDims, x: np.ndarray, t: float) -> float:
        blk = dims.block(x, self.order)
        if self.form == "state":
            return self.coeff * blk[self.axis]
        if self.form == "cubic":
            return self.coeff * float(np.dot(self.weights, blk)) ** 3
        if self.form == "tanh":
            return self.coeff * math.tanh(self.scale * blk[self.axis])
        if self.form == "sin_t":
            return self.coeff * math.sin(self.freq * t + self.phase)
        # sq_tanh
        return self.coeff * blk[self.sq_axis] ** 2 * math.tanh(self.scale * blk[self.axis])

    def gradient(self, dims: BrunovskyDims, x: np.ndarray) -> np.ndarray:
        """d(term)/dx over the full chain state."""
        grad = np.zeros(dims.nd)
        lo = (self.order - 1) * dims.d
        blk = dims.block(x, self.order)
        if self.form == "state":
            grad[lo + self.axis] = self.coeff
        elif self.form == "cubic":
            s = float(np.dot(self.weights, blk))
            for a, w in enumerate(self.weights):
                grad[lo + a] = 3.0 * self.coeff * s * s * w
        elif self.form == "tanh":
            c = math.cosh(self.scale * blk[self.axis])
            grad[lo + self.axis] = self.coeff * self.scale / (c * c)
        elif self.form == "sq_tanh":
            th = math.tanh(self.scale * blk[self.axis])
            c = math.cosh(self.scale * blk[self.axis])
            grad[lo + self.sq_axis] += 2.0 * self.coeff * blk[self.sq_axis] * th
            grad[lo + self.axis] += self.coeff * blk[self.sq_axis] ** 2 * self.scale / (c * c)
        return grad


@dataclass(frozen=True)
class DriftSpec:
    """Drift f(x, t) = -outer_gain * sum(terms) per axis."""

    dims: BrunovskyDims
    outer_gain: float
    axes: tuple[tuple[DriftTerm, ...], ...]

    def __post_init__(self):
        if len(self.axes) != self.dims.d:
            raise DimensionMismatch("drift needs one term list per spatial axis")

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.empty(self.dims.d)
        for k, terms in enumerate(self.axes):
            out[k] = -self.outer_gain * sum(term.value(self.dims, x, t) for term in terms)
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """d x d*n Jacobian of the drift with respect to the chain state."""
        jac = np.zeros((self.dims.d, self.dims.nd))
        for k, terms in enumerate(self.axes):
            for term in terms:
                jac[k] -= self.outer_gain * term.gradient(self.dims, x)
        return jac


@dataclass(frozen=True)
class Box:
    """Axis-aligned box over the full chain state."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise DimensionMismatch("box bounds must have equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ScenarioError("box has lower bound above upper bound")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + rng.random((count, len(self.lower))) * (hi - lo)


@dataclass(frozen=True)
class SinusoidDisturbance:
    """Per-axis w_k(t) = amp_k * sin(freq_k * t + phase_k)."""

    amp: tuple[float, ...]
    freq: tuple[float, ...]
    phase: tuple[float, ...]

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.amp) * np.sin(np.asarray(self.freq) * t + np.asarray(self.phase))

    def norm_bound(self) -> float:
        return float(np.linalg.norm(self.amp))


@dataclass(frozen=True)
class BallDisturbance:
    """Seeded uniform-in-ball disturbance, held constant over each fine step.

    Deterministic: the sample for a given step index is derived from
    (seed, agent_id, step index) alone.
    """

    bound: float
    seed: int
    agent_id: int
    step_duration: float
    dim: int = 2

    def __call__(self, t: float) -> np.ndarray:
        idx = int(np.floor(t / self.step_duration + 1e-12))
        rng = np.random.default_rng((self.seed, self.agent_id, idx))
        vec = rng.normal(size=self.dim)
        nrm = np.linalg.norm(vec)
        if nrm == 0.0:
            return np.zeros(self.dim)
        radius = self.bound * rng.random() ** (1.0 / self.dim)
        return vec * (radius / nrm)

    def norm_bound(self) -> float:
        return self.bound


@dataclass(frozen=True)
class AgentModel:
    """One agent: drift, disturbance, and its design-time constants.

    id 0 is the leader. ``drift_lipschitz`` must bound the drift's state
    Lipschitz constant over ``operating_box`` (spot-checked at certify time).
    """

    id: int
    dims: BrunovskyDims
    drift: DriftSpec
    drift_lipschitz: float
    disturbance: SinusoidDisturbance | BallDisturbance
    disturbance_bound: float
    operating_box: Box

    def check_disturbance_bound(self, t_end: float, samples: int = 2000) -> None:
        ts = np.linspace(0.0, t_end, samples)
        worst = max(float(np.linalg.norm(self.disturbance(t))) for t in ts)
        if worst > self.disturbance_bound + 1e-12:
            raise ScenarioError(
                f"agent {self.id}: disturbance reaches {worst:.6g}, "
                f"declared bound {self.disturbance_bound:.6g}"
            )

    def check_lipschitz(self, rng: np.random.Generator, pairs: int = 200) -> None:
        """Spot-check |f(a) - f(b)| <= L |a - b| on sampled box pairs."""
        a = self.operating_box.sample(rng, pairs)
        b = self.operating_box.sample(rng, pairs)
        for xa, xb in zip(a, b):
            gap = np.linalg.norm(xa - xb)
            if gap < 1e-12:
                continue
            diff = np.linalg.norm(self.drift(xa, 0.0) - self.drift(xb, 0.0))
            if diff > self.drift_lipschitz * gap * (1.0 + 1e-9) + 1e-12:
                raise ScenarioError(
                    f"agent {self.id}: drift violates declared Lipschitz bound "
                    f"({diff / gap:.6g} > {self.drift_lipschitz:.6g})"
                )


def estimate_lipschitz(
    drift: DriftSpec, box: Box, points_per_axis: int = 11, safety: float = 1.25
) -> float:
    """Grid-sample the drift Jacobian spectral norm over the box.

    Evaluates the closed-form Jacobian on a full grid with
    ``points_per_axis`` points per state axis and returns the largest
    spectral norm times ``safety``.
    """
    nd = drift.dims.nd
    if points_per_axis**nd > 5_000_000:
        raise ScenarioError(
            "Lipschitz estimation grid too large for this state dimension; "
            "declare drift_lipschitz explicitly"
        )
    axes = [
        np.linspace(lo, hi, points_per_axis) if hi > lo else np.array([lo])
        for lo, hi in zip(box.lower, box.upper)
    ]
    grid = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    worst = 0.0
    for chunk in np.array_split(grid, max(1, len(grid) // 200_000)):
        for x in chunk:
            s = np.linalg.norm(drift.jacobian(x), 2)
            if s > worst:
                worst = s
    return worst * safety


@dataclass(frozen=True)
class FormationSpec:
    """Formation offsets psi[i][p] in R^d for agents 0..N and orders 1..n."""

    dims: BrunovskyDims
    offsets: np.ndarray  # (N+1, n, d)

    def __post_init__(self):
        expected = (self.dims.followers + 1, self.dims.n, self.dims.d)
        if self.offsets.shape != expected:
            raise DimensionMismatch(f"offsets must have shape {expected}")

    def offset(self, agent: int, order: int) -> np.ndarray:
        return self.offsets[agent, order - 1]

    def stacked(self, agent: int) -> np.ndarray:
        """Full-state offset vector (psi_1, ..., psi_n) for one agent."""
        return self.offsets[agent].reshape(-1)


@dataclass(frozen=True)
class Obstacle:
    """Circular obstacle; the barrier uses radius + inflation as keep-out."""

    center: tuple[float, ...]
    radius: float
    inflation: float = 0.0

    def __post_init__(self):
        if self.radius <= 0.0 or self.inflation < 0.0:
            raise ScenarioError("obstacle needs radius > 0 and inflation >= 0")

    @property
    def effective_radius(self) -> float:
        return self.radius + self.inflation


@dataclass(frozen=True)
class LyapunovPair:
    """Ancillary gain K with Lyapunov certificate (P, Q) for Acl = A0 - G K."""

    gain: np.ndarray  # (d, nd)
    acl: np.ndarray  # (nd, nd)
    p: np.ndarray
    q: np.ndarray
    lambda_min_p: float
    lambda_max_p: float
    lambda_min_q: float

    def residual(self) -> float:
        return float(np.linalg.norm(self.acl.T @ self.p + self.p @ self.acl + self.q, "fro"))

    def lyapunov_value(self, deviation: np.ndarray) -> float:
        return float(deviation @ self.p @ deviation)

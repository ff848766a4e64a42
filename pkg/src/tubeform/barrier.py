"""Exponential CBF rows for quadratic barriers on integrator chains.

The barriers are position-level and quadratic (squared distance minus a
squared keep-out radius), so every Lie derivative along the chain flow is
available in closed form through the Leibniz rule: with D^0 the position
offset, D^m the m-th derivative chain block, and D^n the top-order
derivative (input plus exogenous drift),

    L^k h = sum_m binom(k, m) <D^m, D^{k-m}>.

Only the k = n derivative contains the input, entering through 2 <D^0, v>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradient, DimensionMismatch, NotHurwitz, ScenarioError
from .models import BrunovskyDims, Obstacle

DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class QuadraticBarrier:
    """Obstacle barrier ||p - c||^2 - R^2 or pairwise ||p_i - p_j||^2 - d^2."""

    kind: str  # "obstacle" or "pairwise"
    dims: BrunovskyDims
    center: tuple[float, ...] | None = None
    eff_radius: float = 0.0
    safe_dist: float = 0.0

    def __post_init__(self):
        if self.kind not in ("obstacle", "pairwise"):
            raise ScenarioError(f"unknown barrier kind {self.kind!r}")
        if self.kind == "obstacle" and self.center is None:
            raise ScenarioError("obstacle barrier needs a center")

    @classmethod
    def for_obstacle(cls, dims: BrunovskyDims, obstacle: Obstacle) -> QuadraticBarrier:
        return cls(
            kind="obstacle",
            dims=dims,
            center=tuple(obstacle.center),
            eff_radius=obstacle.effective_radius,
        )

    @classmethod
    def for_pair(cls, dims: BrunovskyDims, safe_dist: float) -> QuadraticBarrier:
        return cls(kind="pairwise", dims=dims, safe_dist=safe_dist)

    @property
    def relative_degree(self) -> int:
        return self.dims.n

    def offset_chain(
        self, x_self: np.ndarray, x_other: np.ndarray | None
    ) -> list[np.ndarray]:
        """D^0 .. D^{n-1}: position offset then derivative blocks."""
        d, n = self.dims.d, self.dims.n
        if self.kind == "obstacle":
            blocks = [x_self[p * d : (p + 1) * d].copy() for p in range(n)]
            blocks[0] = blocks[0] - np.asarray(self.center)
        else:
            if x_other is None:
                raise DimensionMismatch("pairwise barrier needs both agents' states")
            blocks = [
                x_self[p * d : (p + 1) * d] - x_other[p * d : (p + 1) * d]
                for p in range(n)
            ]
        return blocks

    def value(self, x_self: np.ndarray, x_other: np.ndarray | None = None) -> float:
        d0 = self.offset_chain(x_self, x_other)[0]
        ref = self.eff_radius if self.kind == "obstacle" else self.safe_dist
        return float(d0 @ d0) - ref * ref

    def gradient_self(self, x_self: np.ndarray, x_other: np.ndarray | None = None) -> np.ndarray:
        """Gradient over agent i's full chain state (position block only)."""
        d0 = self.offset_chain(x_self, x_other)[0]
        grad = np.zeros(self.dims.nd)
        grad[: self.dims.d] = 2.0 * d0
        return grad

    def gradient_other(self, x_self: np.ndarray, x_other: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.dims.nd)
        grad[: self.dims.d] = -2.0 * self.offset_chain(x_self, x_other)[0]
        return grad


@dataclass(frozen=True)
class EcbfCoefficients:
    """Class-kappa chain coefficients kappa_0 .. kappa_{r-1}.

    The polynomial s^r + kappa_{r-1} s^{r-1} + ... + kappa_0 must be
    Hurwitz, checked through the roots of the companion polynomial.
    """

    kappa: tuple[float, ...]

    def __post_init__(self):
        if any(k <= 0.0 for k in self.kappa):
            raise NotHurwitz("kappa coefficients must be positive")
        poly = np.concatenate(([1.0], np.asarray(self.kappa)[::-1]))
        if np.max(np.roots(poly).real) >= 0.0:
            raise NotHurwitz("eCBF coefficient polynomial is not Hurwitz")

    @classmethod
    def from_poles(cls, poles: tuple[float, ...]) -> EcbfCoefficients:
        coeffs = np.poly(np.asarray(poles, dtype=float))
        return cls(kappa=tuple(coeffs[::-1][:-1]))


@dataclass(frozen=True)
class LieDerivatives:
    """Orders 0..r-1 plus the split top derivative L^r h = drift + row . v."""

    values: tuple[float, ...]  # h, Lh, ..., L^{r-1} h
    input_row: np.ndarray  # (d,): coefficient of the own nominal input
    drift_term: float  # input-free part of L^r h


def lie_derivatives(
    barrier: QuadraticBarrier,
    x_self: np.ndarray,
    x_other: np.ndarray | None = None,
    drift_top_self: np.ndarray | None = None,
    top_other: np.ndarray | None = None,
) -> LieDerivatives:
    """Closed-form Lie derivatives of a quadratic barrier along the chain flow.

    ``drift_top_self`` is the exogenous part of agent i's top-order
    derivative (the held leader feedforward sample); ``top_other`` is the
    neighbor's full predicted top derivative for pairwise barriers.
    Raises DegenerateGradient when the position offset is numerically zero.
    """
    dims = barrier.dims
    n = dims.n
    blocks = barrier.offset_chain(x_self, x_other)
    if float(np.linalg.norm(blocks[0])) < DEGENERATE_TOL:
        raise DegenerateGradient("barrier gradient undefined at zero offset")

    ref = barrier.eff_radius if barrier.kind == "obstacle" else barrier.safe_dist
    values = []
    for k in range(n):
        total = sum(
            math.comb(k, m) * float(blocks[m] @ blocks[k - m]) for m in range(k + 1)
        )
        values.append(total)
    values[0] -= ref * ref

    drift_self = np.zeros(dims.d) if drift_top_self is None else np.asarray(drift_top_self)
    if barrier.kind == "pairwise":
        other_top = np.zeros(dims.d) if top_other is None else np.asarray(top_other)
        d_n_exo = drift_self - other_top
    else:
        d_n_exo = drift_self

    drift = 2.0 * float(blocks[0] @ d_n_exo)
    drift += sum(
        math.comb(n, m) * float(blocks[m] @ blocks[n - m]) for m in range(1, n)
    )
    return LieDerivatives(
        values=tuple(values),
        input_row=2.0 * blocks[0],
        drift_term=drift,
    )


def margin_obstacle(r_ball: float, grad: np.ndarray) -> float:
    """Tightening margin r_ball * ||grad h|| for one obstacle constraint."""
    return r_ball * float(np.linalg.norm(grad))


def margin_pairwise(
    r_ball_i: float, r_ball_j: float, grad_i: np.ndarray, grad_j: np.ndarray
) -> float:
    """Sum of both agents' support terms along the pairwise barrier gradients."""
    return r_ball_i * float(np.linalg.norm(grad_i)) + r_ball_j * float(
        np.linalg.norm(grad_j)
    )


@dataclass(frozen=True)
class TightenedConstraintRow:
    """Affine constraint a . v + b >= 0 on the nominal input at one step."""

    a: np.ndarray  # (d,)
    b: float
    margin: float


def assemble_row(
    barrier: QuadraticBarrier,
    kappa: EcbfCoefficients,
    x_self: np.ndarray,
    x_other: np.ndarray | None,
    margin: float,
    drift_top_self: np.ndarray | None = None,
    top_other: np.ndarray | None = None,
) -> TightenedConstraintRow:
    """Tightened eCBF row at the given nominal linearization states."""
    lie = lie_derivatives(barrier, x_self, x_other, drift_top_self, top_other)
    if len(kappa.kappa) != barrier.relative_degree:
        raise DimensionMismatch("kappa length must equal the relative degree")
    b = lie.drift_term
    for q in range(1, barrier.relative_degree):
        b += kappa.kappa[q] * lie.values[q]
    b += kappa.kappa[0] * (lie.values[0] - margin)
    return TightenedConstraintRow(a=lie.input_row, b=float(b), margin=margin)

"""Offline certification: gains, tube radii, disturbance bounds, input tightening.

The certified quantities follow the worst-case closed forms: the leader tube
radius with its Lipschitz feasibility condition, the effective disturbance
bound combining the physical bound with the leader-deviation feedthrough, the
explicit follower tube radius (no follower-Lipschitz condition), and the
no-feedforward baseline radius kept for comparison. Scenario files may
additionally declare smaller margin radii; those are verified at runtime by
the simulator rather than proven offline (see decisions in the repo docs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTightenedSet,
    InfeasibleLeaderTube,
    NotHurwitz,
    ScenarioError,
)
from .linalg import eig_sym, is_hurwitz, solve_continuous_lyapunov, sym_inv_sqrt
from .models import BrunovskyDims, LyapunovPair, chain_matrices


@dataclass(frozen=True)
class GainSpec:
    """Ancillary gain selection: explicit matrix, pole set, or LQR weights.

    mode "poles":    one negative real pole per chain order, repeated across
                     the d axes (characteristic-coefficient formula).
    mode "explicit": full (d, nd) gain matrix.
    mode "lqr":      state/input weight scalars, solved by Kleinman iteration.
    The Lyapunov Q defaults to identity; a diagonal may be supplied.
    """

    mode: str = "poles"
    poles: tuple[float, ...] = (-2.0, -3.0, -4.0)
    matrix: tuple[tuple[float, ...], ...] | None = None
    state_weight: float = 1.0
    input_weight: float = 1.0
    lyapunov_q: tuple[float, ...] | None = None


def _pole_placement_gain(dims: BrunovskyDims, poles: tuple[float, ...]) -> np.ndarray:
    if len(poles) != dims.n:
        raise DimensionMismatch("need one pole per chain order")
    if any(p >= 0.0 for p in poles):
        raise NotHurwitz("pole placement requires strictly negative poles")
    coeffs = np.poly(np.asarray(poles, dtype=float))  # [1, c_{n-1}, ..., c_0]
    taps = coeffs[::-1][:-1]  # [c_0, c_1, ..., c_{n-1}]
    blocks = [tap * np.eye(dims.d) for tap in taps]
    return np.hstack(blocks)


def _kleinman_lqr(dims: BrunovskyDims, qw: float, rw: float) -> np.ndarray:
    a0, g = chain_matrices(dims)
    q = qw * np.eye(dims.nd)
    r_inv = np.eye(dims.d) / rw
    k = _pole_placement_gain(dims, tuple(float(-(i + 1)) for i in range(dims.n)))
    for _ in range(60):
        acl = a0 - g @ k
        p = solve_continuous_lyapunov(acl, q + k.T @ (rw * np.eye(dims.d)) @ k)
        k_next = r_inv @ g.T @ p
        if np.max(np.abs(k_next - k)) < 1e-12:
            return k_next
        k = k_next
    return k


def build_lyapunov_pair(
    dims: BrunovskyDims, gain: np.ndarray, lyapunov_q: np.ndarray | None = None
) -> LyapunovPair:
    """Assemble Acl = A0 - G K with its Lyapunov certificate."""
    a0, g = chain_matrices(dims)
    gain = np.asarray(gain, dtype=float)
    if gain.shape != (dims.d, dims.nd):
        raise DimensionMismatch(f"gain must have shape ({dims.d}, {dims.nd})")
    acl = a0 - g @ gain
    if not is_hurwitz(acl):
        raise NotHurwitz("closed-loop matrix is not Hurwitz")
    q = np.eye(dims.nd) if lyapunov_q is None else np.asarray(lyapunov_q, dtype=float)
    p = solve_continuous_lyapunov(acl, q)
    wp, _ = eig_sym(p)
    wq, _ = eig_sym(q)
    if wp[0] <= 0.0:
        raise NotHurwitz("Lyapunov solution is not positive definite")
    return LyapunovPair(
        gain=gain,
        acl=acl,
        p=p,
        q=q,
        lambda_min_p=float(wp[0]),
        lambda_max_p=float(wp[-1]),
        lambda_min_q=float(wq[0]),
    )


def synth_gain(dims: BrunovskyDims, spec: GainSpec) -> tuple[np.ndarray, LyapunovPair]:
    """Synthesize the ancillary gain and its Lyapunov pair."""
    if spec.mode == "poles":
        gain = _pole_placement_gain(dims, tuple(spec.poles))
    elif spec.mode == "explicit":
        if spec.matrix is None:
            raise ScenarioError("explicit gain mode needs a matrix")
        gain = np.asarray(spec.matrix, dtype=float)
    elif spec.mode == "lqr":
        gain = _kleinman_lqr(dims, spec.state_weight, spec.input_weight)
    else:
        raise ScenarioError(f"unknown gain mode {spec.mode!r}")
    lyap_q = np.diag(spec.lyapunov_q) if spec.lyapunov_q is not None else None
    pair = build_lyapunov_pair(dims, gain, lyap_q)
    return gain, pair


@dataclass(frozen=True)
class LeaderCertificate:
    """Leader nominal-deviation certificate: Lyapunov pair plus ball radius."""

    lyap: LyapunovPair
    rho0: float
    r_ball0: float
    mode: str  # "declared" or "lyapunov"


def leader_radius(lyap: LyapunovPair, w0_bar: float, l0: float) -> LeaderCertificate:
    """Leader tube radius with its Lipschitz feasibility condition.

    rho0 = 2 lmax(P) ||G|| w0 / (lmin(Q) - 2 lmax(P) ||G|| L0), requiring a
    positive denominator; ||G|| = 1 for the chain selector.
    """
    denom = lyap.lambda_min_q - 2.0 * lyap.lambda_max_p * l0
    if denom <= 0.0:
        raise InfeasibleLeaderTube(
            f"need lmin(Q) > 2 lmax(P) L0: {lyap.lambda_min_q:.6g} <= "
            f"{2.0 * lyap.lambda_max_p * l0:.6g}"
        )
    rho0 = 2.0 * lyap.lambda_max_p * w0_bar / denom
    return LeaderCertificate(
        lyap=lyap,
        rho0=rho0,
        r_ball0=rho0 / np.sqrt(lyap.lambda_min_p),
        mode="lyapunov",
    )


def declared_leader_certificate(lyap: LyapunovPair, r_ball0: float) -> LeaderCertificate:
    """Leader certificate with a scenario-declared ball radius."""
    if r_ball0 < 0.0:
        raise ScenarioError("declared leader radius must be nonnegative")
    return LeaderCertificate(
        lyap=lyap,
        rho0=r_ball0 * float(np.sqrt(lyap.lambda_min_p)),
        r_ball0=r_ball0,
        mode="declared",
    )


def effective_disturbance(w_bar: float, l0: float, r0_ball: float) -> float:
    """w_eff = w_bar + L0 * r0_ball."""
    return w_bar + l0 * r0_ball


def follower_radius(lyap: LyapunovPair, w_eff: float) -> tuple[float, float]:
    """Explicit tube radius under feedforward cancellation.

    r = 2 lmax(P)^{3/2} ||G|| w_eff / lmin(Q); no follower-Lipschitz
    condition, so this always succeeds for a Hurwitz closed loop.
    """
    r = 2.0 * lyap.lambda_max_p**1.5 * w_eff / lyap.lambda_min_q
    return r, r / float(np.sqrt(lyap.lambda_min_p))


def baseline_radius(lyap: LyapunovPair, w_bar: float, lf: float) -> float | None:
    """No-feedforward tube radius; None when its feasibility condition fails."""
    denom = lyap.lambda_min_q - 2.0 * lf * lyap.lambda_max_p
    if denom <= 0.0:
        return None
    return 2.0 * w_bar * lyap.lambda_max_p / denom


def input_margin(lyap: LyapunovPair, r: float) -> float:
    """eta = r * smax(K P^{-1/2}), the ancillary feedback's worst-case draw."""
    m = lyap.gain @ sym_inv_sqrt(lyap.p)
    w, _ = eig_sym(m @ m.T)
    return r * float(np.sqrt(max(0.0, w[-1])))


def input_tightening(lyap: LyapunovPair, r: float, u_max: float) -> tuple[float, float]:
    """Per-axis tightened input bound u_max - eta; raises when empty."""
    eta = input_margin(lyap, r)
    if u_max <= eta:
        raise EmptyTightenedSet(
            f"input bound {u_max:.6g} does not exceed ancillary margin {eta:.6g}"
        )
    return u_max - eta, eta


@dataclass(frozen=True)
class TubeCertificate:
    """Per-agent certified quantities feeding the online controller."""

    agent: int
    lyap: LyapunovPair
    w_bar_used: float  # physical bound plus relay staleness allowance
    w_eff: float
    r: float
    r_ball: float
    input_eta: float
    input_bound: float  # tightened per-axis bound on the nominal input
    margin_radius: float  # deviation radius used for eCBF margins/broadcast
    margin_mode: str  # "certified" or "declared"
    baseline_r: float | None
    baseline_r_ball: float | None
    hops: int

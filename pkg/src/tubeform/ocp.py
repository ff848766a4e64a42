"""Per-agent finite-horizon optimal control problem in condensed form.

The prediction model is the synchronization-error chain driven by the
agent's own nominal input (through its graph coupling) and the neighbors'
predicted inputs as an exogenous term. Because the continuous model is a
polynomial chain, the one-step RK4 map coincides with the exact matrix
exponential for n <= 4, so the discretization below uses the truncated
series, which is exact.

The QP is condensed onto the input sequence; the terminal control law is
substituted directly, the terminal ellipsoid enters as one supporting
hyperplane per linearization pass, and barrier rows are affine in the
per-step input at a frozen linearization trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RiccatiDiverged, ScenarioError
from .models import BrunovskyDims, chain_matrices
from .qp import INFEASIBLE, OPTIMAL, QpProblem, solve_qp

SQP_TOL = 1e-5
SQP_MAX_PASSES = 5
SQP_DAMPING = 0.5  # relaxation applied after the first pass to stop zigzag


def discretize_error_dynamics(dims: BrunovskyDims, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact discrete maps (Ad, Bd) of the chain over one sampling period.

    Ad = sum_k (A0 Ts)^k / k!, Bd = sum_k A0^k G Ts^{k+1} / (k+1)!, both
    finite sums because A0 is nilpotent. The per-step exogenous term enters
    through the same Bd.
    """
    if ts <= 0.0:
        raise ScenarioError("sampling period must be positive")
    a0, g = chain_matrices(dims)
    nd = dims.nd
    ad = np.eye(nd)
    bd = g * ts
    power = np.eye(nd)
    for k in range(1, dims.n):
        power = power @ a0 * ts
        ad = ad + power / math.factorial(k)
        bd = bd + (power @ g) * ts / math.factorial(k + 1)
    return ad, bd


def terminal_ingredients(
    ad: np.ndarray,
    bd: np.ndarray,
    qr: np.ndarray,
    r: np.ndarray,
    input_bound: float,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Terminal gain, terminal cost, and terminal-set level.

    Solves the discrete Riccati equation by fixed-point iteration from Qr,
    then sizes the level c_f as the largest value keeping the terminal law
    inside the (tightened) input box over the whole level set, halved for
    slack against the barrier rows.
    """
    p = qr.copy()
    for _ in range(max_iter):
        btp = bd.T @ p
        gain_term = np.linalg.solve(r + btp @ bd, btp @ ad)
        p_next = qr + ad.T @ p @ ad - ad.T @ p @ bd @ gain_term
        p_next = 0.5 * (p_next + p_next.T)
        if np.linalg.norm(p_next - p, "fro") <= tol:
            p = p_next
            break
        p = p_next
    else:
        raise RiccatiDiverged("discrete Riccati iteration did not converge")
    btp = bd.T @ p
    khat = np.linalg.solve(r + btp @ bd, btp @ ad)

    if np.max(np.abs(khat)) <= 1e-300 or not np.isfinite(input_bound):
        return khat, p, math.inf
    p_inv = np.linalg.inv(p)
    worst = max(float(row @ p_inv @ row) for row in khat)
    c_f = math.inf if worst <= 1e-300 else 0.5 * input_bound**2 / worst
    return khat, p, c_f


@dataclass(frozen=True)
class OcpSpec:
    """Weights, horizon, and terminal ingredients for one agent's OCP."""

    dims: BrunovskyDims
    horizon: int
    ts: float
    qr: np.ndarray  # (nd, nd)
    r: np.ndarray  # (d, d)
    rdelta: np.ndarray  # (d, d)
    pr: np.ndarray  # (nd, nd)
    input_bound: float  # tightened per-axis bound on the nominal input
    terminal_gain: np.ndarray | None  # (d, nd)
    terminal_level: float
    coupling: float  # nu1 * d_i + nu2 * b_i0
    ad: np.ndarray
    bd: np.ndarray
    error_box: np.ndarray | None = None  # (nd,) tightened symmetric bounds

    @property
    def n_inputs(self) -> int:
        return self.horizon * self.dims.d


@dataclass
class OcpSolution:
    inputs: np.ndarray  # (H, d)
    errors: np.ndarray  # (H+1, nd)
    states: np.ndarray  # (H+1, nd)
    objective: float
    iterations: int
    sqp_passes: int
    status: str
    row_slack: float = math.inf  # min slack of the last pass's barrier rows
    slack: float = 0.0  # exact-penalty violation; inf when the QP itself failed
    converged: bool = False  # input change fell below tolerance within the pass cap


@dataclass(frozen=True)
class _CondensedMaps:
    """Affine maps from the free inputs to the full input and error stacks."""

    t_map: np.ndarray  # z = t_map @ z_free + t_off
    t_off: np.ndarray
    e_map: np.ndarray  # stacked (ebar_1 .. ebar_H) = e_map @ z + e_off
    e_off: np.ndarray
    n_slack: int = 0  # trailing slack variables appended to the QP decision


def _stacked_error_maps(spec: OcpSpec, e0: np.ndarray, s_seq: np.ndarray):
    h, nd, d = spec.horizon, spec.dims.nd, spec.dims.d
    powers = [np.eye(nd)]
    for _ in range(h):
        powers.append(spec.ad @ powers[-1])
    bz = np.zeros((h * nd, h * d))
    f_off = np.zeros(h * nd)
    for step in range(1, h + 1):
        row = (step - 1) * nd
        f_off[row : row + nd] = powers[step] @ e0
        for m in range(step):
            bz[row : row + nd, m * d : (m + 1) * d] = powers[step - 1 - m] @ spec.bd
    e_map = -spec.coupling * bz
    e_off = f_off + bz @ s_seq.reshape(-1)
    return e_map, e_off


def build_qp(
    spec: OcpSpec,
    e0: np.ndarray,
    s_seq: np.ndarray,
    v_prev: np.ndarray,
    barrier_rows: list[tuple[int, np.ndarray, float]],
    terminal_e_ref: np.ndarray | None = None,
    use_terminal_law: bool = True,
    slack_penalty: float | None = None,
) -> tuple[QpProblem, _CondensedMaps]:
    """Condense the OCP into an inequality-constrained QP on the inputs.

    ``barrier_rows`` holds (step, a, b) with the constraint a . v_step + b
    >= 0 evaluated at the caller's linearization trajectory.
    ``terminal_e_ref`` is that trajectory's terminal error, used for the
    supporting-hyperplane row of the terminal ellipsoid.

    With ``slack_penalty`` set, barrier and terminal-set rows get
    nonnegative slack variables penalized linearly (exact penalty): a
    feasible problem still returns zero slack, an infeasible one returns
    the minimally violating plan. Rows may carry a group tag (4th tuple
    element) selecting one of the penalties, so obstacle rows can be made
    strictly more expensive to violate than inter-agent rows. Input box
    rows always stay hard.
    """
    h, nd, d = spec.horizon, spec.dims.nd, spec.dims.d
    if e0.shape != (nd,) or s_seq.shape != (h, d):
        raise DimensionMismatch("bad e0 or exogenous sequence shape")
    n_z = h * d
    e_map, e_off = _stacked_error_maps(spec, e0, s_seq)

    # terminal law substitution: v_{H-1} = W ebar_{H-1} + w0
    if use_terminal_law:
        if spec.terminal_gain is None:
            raise ScenarioError("terminal law requested without a terminal gain")
        if h < 2:
            raise ScenarioError("terminal-law substitution needs horizon >= 2")
        khat = spec.terminal_gain
        lhs = np.eye(d) - spec.coupling * (khat @ spec.bd)
        w_mat = -np.linalg.solve(lhs, khat @ spec.ad)
        w_off = -np.linalg.solve(lhs, khat @ spec.bd @ s_seq[h - 1])
        row = (h - 2) * nd
        eh1_map = e_map[row : row + nd, : (h - 1) * d]
        eh1_off = e_off[row : row + nd]
        n_free = (h - 1) * d
        t_map = np.zeros((n_z, n_free))
        t_map[:n_free, :] = np.eye(n_free)
        t_map[n_free:, :] = w_mat @ eh1_map
        t_off = np.zeros(n_z)
        t_off[n_free:] = w_mat @ eh1_off + w_off
    else:
        t_map = np.eye(n_z)
        t_off = np.zeros(n_z)

    # cost: sum_{l=1}^{H-1} |e_l|_Qr^2 + |e_H|_Pr^2 + sum |v_l|_R^2 + |dv_l|_Rd^2
    cost_blocks = [spec.qr] * (h - 1) + [spec.pr]
    c_e = np.zeros((h * nd, h * nd))
    for idx, blk in enumerate(cost_blocks):
        c_e[idx * nd : (idx + 1) * nd, idx * nd : (idx + 1) * nd] = blk
    hess = 2.0 * (e_map.T @ c_e @ e_map)
    lin = 2.0 * (e_map.T @ c_e @ e_off)
    const = float(e_off @ c_e @ e_off) + float(e0 @ spec.qr @ e0)

    for step in range(h):
        sl = slice(step * d, (step + 1) * d)
        hess[sl, sl] += 2.0 * spec.r

    d_mat = np.eye(n_z)
    for step in range(1, h):
        d_mat[step * d : (step + 1) * d, (step - 1) * d : step * d] = -np.eye(d)
    d_off = np.zeros(n_z)
    d_off[:d] = -v_prev
    rd_full = np.kron(np.eye(h), spec.rdelta)
    hess += 2.0 * d_mat.T @ rd_full @ d_mat
    lin += 2.0 * d_mat.T @ rd_full @ d_off
    const += float(d_off @ rd_full @ d_off)

    if slack_penalty is not None and np.isscalar(slack_penalty):
        slack_penalty = (float(slack_penalty),)
    rows_a: list[np.ndarray] = []
    rows_b: list[float] = []
    soft: list[int] = []  # -1 hard, otherwise slack-group index
    if np.isfinite(spec.input_bound):
        for step in range(h):
            for axis in range(d):
                unit = np.zeros(n_z)
                unit[step * d + axis] = 1.0
                rows_a.append(unit)
                rows_b.append(-spec.input_bound)
                rows_a.append(-unit)
                rows_b.append(-spec.input_bound)
                soft += [-1, -1]
    for entry in barrier_rows:
        step, a_vec, b_val = entry[0], entry[1], entry[2]
        group = entry[3] if len(entry) > 3 else 0
        row = np.zeros(n_z)
        row[step * d : (step + 1) * d] = a_vec
        rows_a.append(row)
        rows_b.append(-b_val)
        soft.append(group)
    if spec.error_box is not None:
        for step in range(1, h + 1):
            blk = slice((step - 1) * nd, step * nd)
            for comp in range(nd):
                bound = spec.error_box[comp]
                if not np.isfinite(bound):
                    continue
                rows_a.append(-e_map[blk][comp])
                rows_b.append(e_off[blk][comp] - bound)
                rows_a.append(e_map[blk][comp])
                rows_b.append(-e_off[blk][comp] - bound)
                soft += [-1, -1]
    if (
        use_terminal_law
        and terminal_e_ref is not None
        and np.isfinite(spec.terminal_level)
    ):
        level = float(terminal_e_ref @ spec.pr @ terminal_e_ref)
        if level > 1e-12:
            y = terminal_e_ref * math.sqrt(spec.terminal_level / level)
            py = spec.pr @ y
            blk = slice((h - 1) * nd, h * nd)
            rows_a.append(-e_map[blk].T @ py)
            rows_b.append(float(py @ e_off[blk]) - spec.terminal_level)
            soft.append(len(slack_penalty) - 1 if slack_penalty is not None else 0)

    a_in = np.asarray(rows_a) if rows_a else np.zeros((0, n_z))
    b_in = np.asarray(rows_b) if rows_b else np.zeros(0)

    # reduce everything onto the free inputs
    hess_f = t_map.T @ hess @ t_map
    lin_f = t_map.T @ (hess @ t_off + lin)
    const_f = const + float(0.5 * t_off @ hess @ t_off + lin @ t_off)
    a_f = a_in @ t_map if a_in.size else np.zeros((0, t_map.shape[1]))
    b_f = b_in - (a_in @ t_off if a_in.size else 0.0)
    hess_f = 0.5 * (hess_f + hess_f.T)

    used_groups = sorted({g for g in soft if g >= 0}) if slack_penalty is not None else []
    if used_groups:
        n_free = hess_f.shape[0]
        n_sig = len(used_groups)
        col_of = {g: n_free + idx for idx, g in enumerate(used_groups)}
        hess_s = np.zeros((n_free + n_sig, n_free + n_sig))
        hess_s[:n_free, :n_free] = hess_f
        for idx in range(n_sig):
            hess_s[n_free + idx, n_free + idx] = 1.0  # keeps the Hessian SPD
        lin_s = np.concatenate(
            [lin_f, [slack_penalty[min(g, len(slack_penalty) - 1)] for g in used_groups]]
        )
        a_s = np.zeros((a_f.shape[0] + n_sig, n_free + n_sig))
        a_s[: a_f.shape[0], :n_free] = a_f
        for ridx, g in enumerate(soft):
            if g >= 0:
                a_s[ridx, col_of[g]] = 1.0
        for idx in range(n_sig):  # slack nonnegativity
            a_s[a_f.shape[0] + idx, n_free + idx] = 1.0
        b_s = np.concatenate([b_f, np.zeros(n_sig)])
        qp = QpProblem(hessian=hess_s, linear=lin_s, a_in=a_s, b_in=b_s, constant=const_f)
    else:
        qp = QpProblem(hessian=hess_f, linear=lin_f, a_in=a_f, b_in=b_f, constant=const_f)
    return qp, _CondensedMaps(
        t_map=t_map, t_off=t_off, e_map=e_map, e_off=e_off, n_slack=len(used_groups)
    )


def rollout_errors(spec: OcpSpec, e0: np.ndarray, s_seq: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Propagate the error chain through the given input sequence."""
    out = np.zeros((spec.horizon + 1, spec.dims.nd))
    out[0] = e0
    for step in range(spec.horizon):
        q = -spec.coupling * inputs[step] + s_seq[step]
        out[step + 1] = spec.ad @ out[step] + spec.bd @ q
    return out


def rollout_states(spec: OcpSpec, x0: np.ndarray, ff_seq: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Propagate the nominal chain state through inputs plus feedforward."""
    out = np.zeros((spec.horizon + 1, spec.dims.nd))
    out[0] = x0
    for step in range(spec.horizon):
        out[step + 1] = spec.ad @ out[step] + spec.bd @ (inputs[step] + ff_seq[step])
    return out


def rollout_objective(
    spec: OcpSpec,
    e0: np.ndarray,
    s_seq: np.ndarray,
    v_prev: np.ndarray,
    inputs: np.ndarray,
) -> float:
    """Objective of an input sequence evaluated by explicit rollout."""
    errors = rollout_errors(spec, e0, s_seq, inputs)
    total = 0.0
    prev = v_prev
    for step in range(spec.horizon):
        total += float(errors[step] @ spec.qr @ errors[step])
        total += float(inputs[step] @ spec.r @ inputs[step])
        dv = inputs[step] - prev
        total += float(dv @ spec.rdelta @ dv)
        prev = inputs[step]
    total += float(errors[-1] @ spec.pr @ errors[-1])
    return total


def solve_ocp(
    spec: OcpSpec,
    e0: np.ndarray,
    x0_nominal: np.ndarray,
    s_seq: np.ndarray,
    ff_seq: np.ndarray,
    v_prev: np.ndarray,
    warm_inputs: np.ndarray,
    row_builder=None,
    use_terminal_law: bool = True,
    qp_tol: float = 1e-8,
    slack_penalty: float | None = None,
) -> OcpSolution:
    """Successive linearization around the predicted nominal trajectory.

    Each pass rolls the nominal states from the current input iterate,
    assembles barrier rows there through ``row_builder(states)``, solves the
    condensed QP, and repeats until the input change drops below 1e-5 or
    five passes elapse. Updates after the first pass are damped to suppress
    linearization zigzag.

    Barrier rows are enforced on the freely optimized inputs (steps
    0..H-2); the last input is tied to the terminal law, whose barrier
    compatibility is an offline design property, so re-imposing the row
    there would only create artificial conflicts with far-from-terminal
    errors.

    With ``slack_penalty`` set the passes solve the exact-penalty softened
    QP: the method can then route around linearizations whose hard rows are
    momentarily inconsistent. The returned status is Infeasible whenever
    the final pass needed nonzero slack, and the minimally violating plan
    is still returned for the caller's fallback logic.
    """
    h, d = spec.horizon, spec.dims.d
    free_steps = h - 1 if use_terminal_law else h
    inputs = warm_inputs.copy()
    iterations = 0
    status = OPTIMAL
    rows: list[tuple[int, np.ndarray, float]] = []
    passes = 0
    objective = math.inf
    slack_used = 0.0
    converged = False
    for passes in range(1, SQP_MAX_PASSES + 1):
        states = rollout_states(spec, x0_nominal, ff_seq, inputs)
        errors = rollout_errors(spec, e0, s_seq, inputs)
        if row_builder is not None:
            rows = [r for r in row_builder(states) if r[0] < free_steps]
        qp, maps = build_qp(
            spec,
            e0,
            s_seq,
            v_prev,
            rows,
            terminal_e_ref=errors[-1],
            use_terminal_law=use_terminal_law,
            slack_penalty=slack_penalty,
        )
        sol = solve_qp(qp, tol=qp_tol)
        iterations += sol.iterations
        if sol.status == INFEASIBLE:
            return OcpSolution(
                inputs=inputs,
                errors=rollout_errors(spec, e0, s_seq, inputs),
                states=rollout_states(spec, x0_nominal, ff_seq, inputs),
                objective=math.inf,
                iterations=iterations,
                sqp_passes=passes,
                status=INFEASIBLE,
                slack=math.inf,
            )
        status = sol.status
        if maps.n_slack:
            slack_used = float(np.max(sol.z[-maps.n_slack :]))
            z_free = sol.z[: -maps.n_slack]
        else:
            slack_used = 0.0
            z_free = sol.z
        z = maps.t_map @ z_free + maps.t_off
        new_inputs = z.reshape(h, d)
        delta = float(np.max(np.abs(new_inputs - inputs)))
        if passes == 1:
            inputs = new_inputs
        else:
            inputs = inputs + SQP_DAMPING * (new_inputs - inputs)
        objective = sol.objective
        if delta < SQP_TOL:
            inputs = new_inputs
            converged = True
            break
    if slack_used > 1e-6:
        status = INFEASIBLE

    slack = math.inf
    for entry in rows:
        step, a_vec, b_val = entry[0], entry[1], entry[2]
        slack = min(slack, float(a_vec @ inputs[step] + b_val))
    return OcpSolution(
        inputs=inputs,
        errors=rollout_errors(spec, e0, s_seq, inputs),
        states=rollout_states(spec, x0_nominal, ff_seq, inputs),
        objective=objective,
        iterations=iterations,
        sqp_passes=passes,
        status=status,
        row_slack=slack,
        slack=slack_used,
        converged=converged,
    )

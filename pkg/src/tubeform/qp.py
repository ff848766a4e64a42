"""Dense active-set solver for small strictly convex QPs.

Problems here have at most ~10 decision variables and ~60 inequality rows
(per-agent MPC subproblems), so a textbook dense dual active-set method
(Goldfarb-Idnani) is entirely adequate: it starts from the unconstrained
minimizer, adds one violated row at a time while keeping dual feasibility,
and certifies infeasibility exactly through a Farkas-type unbounded dual
step. Equality rows are eliminated by a nullspace change of variables.

    minimize 0.5 z' H z + g' z + const
    s.t.     A_in z >= b_in,  A_eq z = b_eq
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"
INFEASIBLE = "Infeasible"


@dataclass
class QpProblem:
    hessian: np.ndarray
    linear: np.ndarray
    a_in: np.ndarray
    b_in: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    constant: float = 0.0

    def __post_init__(self):
        m = self.linear.shape[0]
        if self.hessian.shape != (m, m):
            raise DimensionMismatch("Hessian shape does not match linear term")
        if self.a_in.size and self.a_in.shape[1] != m:
            raise DimensionMismatch("inequality rows do not match variable count")

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.hessian @ z + self.linear @ z + self.constant)


@dataclass
class QpSolution:
    z: np.ndarray
    duals: np.ndarray
    status: str
    iterations: int
    objective: float
    stationarity: float = np.inf
    feasibility: float = np.inf
    complementarity: float = np.inf
    duals_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))


def kkt_residuals(qp: QpProblem, z: np.ndarray, duals: np.ndarray) -> tuple[float, float, float]:
    """(stationarity, primal feasibility, complementarity) residuals."""
    stat = qp.hessian @ z + qp.linear
    if qp.a_in.size:
        stat = stat - qp.a_in.T @ duals
        slack = qp.a_in @ z - qp.b_in
        feas = max(0.0, float(-np.min(slack)))
        comp = float(np.max(np.abs(duals * slack)))
    else:
        feas, comp = 0.0, 0.0
    return float(np.max(np.abs(stat))), feas, comp


def _dual_active_set(h_inv, g, a, b, tol, max_iter):
    """Goldfarb-Idnani loop. Returns (z, duals, status, iterations)."""
    n_rows = a.shape[0]
    z = -h_inv @ g
    duals = np.zeros(n_rows)
    active: list[int] = []
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        slack = a @ z - b if n_rows else np.zeros(0)
        if not n_rows or np.min(slack) >= -tol:
            return z, duals, OPTIMAL, iterations
        p = int(np.argmin(slack))
        # inner loop: take full/partial steps until row p becomes active
        lam_p = 0.0
        for _ in range(2 * n_rows + 2):
            a_p = a[p]
            if active:
                a_act = a[active]
                m_small = a_act @ h_inv @ a_act.T
                try:
                    r = np.linalg.solve(m_small, a_act @ (h_inv @ a_p))
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(m_small, a_act @ (h_inv @ a_p), rcond=None)[0]
                step_dir = h_inv @ (a_p - a_act.T @ r)
            else:
                r = np.zeros(0)
                step_dir = h_inv @ a_p
            denom = float(a_p @ step_dir)
            s_p = float(a_p @ z - b[p])
            t_full = np.inf if denom <= tol * max(1.0, a_p @ a_p) else -s_p / denom
            t_partial = np.inf
            blocking = -1
            for idx, j in enumerate(active):
                if r[idx] > tol:
                    cand = duals[j] / r[idx]
                    if cand < t_partial:
                        t_partial = cand
                        blocking = idx
            t = min(t_full, t_partial)
            if not np.isfinite(t):
                return z, duals, INFEASIBLE, iterations  # Farkas-type certificate
            z = z + t * step_dir
            for idx, j in enumerate(active):
                duals[j] -= t * r[idx]
            lam_p += t
            if t_full <= t_partial:
                duals[p] = lam_p
                if p not in active:
                    active.append(p)
                break
            drop = active.pop(blocking)
            duals[drop] = 0.0
        else:
            return z, duals, MAX_ITER, iterations
    return z, duals, MAX_ITER, iterations


def _eliminate_equalities(qp: QpProblem):
    """Reduce A_eq z = b_eq by a nullspace change of variables."""
    a_eq = np.atleast_2d(qp.a_eq)
    b_eq = np.atleast_1d(qp.b_eq)
    z_part, *_ = np.linalg.lstsq(a_eq, b_eq, rcond=None)
    if np.max(np.abs(a_eq @ z_part - b_eq)) > 1e-9 * max(1.0, float(np.max(np.abs(b_eq)))):
        return None
    _, s, vt = np.linalg.svd(a_eq)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 1.0)))
    return z_part, vt[rank:].T


def solve_qp(qp: QpProblem, tol: float = 1e-10, max_iter: int = 400) -> QpSolution:
    """Solve a strictly convex QP by the dual active-set method.

    On OPTIMAL the returned point satisfies the KKT conditions with
    stationarity, feasibility, and complementarity residuals below 1e-8.
    INFEASIBLE is certified by an unbounded dual step (no primal point can
    satisfy the incoming row given the active set).
    """
    if qp.a_eq is not None and np.size(qp.a_eq):
        reduced = _eliminate_equalities(qp)
        if reduced is None:
            return QpSolution(
                z=np.zeros_like(qp.linear),
                duals=np.zeros(qp.a_in.shape[0]),
                status=INFEASIBLE,
                iterations=0,
                objective=np.inf,
            )
        z_part, basis = reduced
        if basis.shape[1] == 0:
            feas_ok = not qp.a_in.size or np.min(qp.a_in @ z_part - qp.b_in) >= -1e-8
            return QpSolution(
                z=z_part,
                duals=np.zeros(qp.a_in.shape[0]),
                status=OPTIMAL if feas_ok else INFEASIBLE,
                iterations=0,
                objective=qp.objective(z_part),
            )
        inner = QpProblem(
            hessian=basis.T @ qp.hessian @ basis,
            linear=basis.T @ (qp.hessian @ z_part + qp.linear),
            a_in=qp.a_in @ basis if qp.a_in.size else np.zeros((0, basis.shape[1])),
            b_in=qp.b_in - (qp.a_in @ z_part if qp.a_in.size else 0.0),
            constant=qp.objective(z_part),
        )
        sol = solve_qp(inner, tol=tol, max_iter=max_iter)
        z = z_part + basis @ sol.z
        out = QpSolution(
            z=z,
            duals=sol.duals,
            status=sol.status,
            iterations=sol.iterations,
            objective=qp.objective(z),
        )
        if sol.status == OPTIMAL:
            res = qp.hessian @ z + qp.linear
            if qp.a_in.size:
                res = res - qp.a_in.T @ sol.duals
            out.duals_eq = np.linalg.lstsq(np.atleast_2d(qp.a_eq).T, -res, rcond=None)[0]
            out.stationarity = float(
                np.max(np.abs(res + np.atleast_2d(qp.a_eq).T @ out.duals_eq))
            )
            _, out.feasibility, out.complementarity = kkt_residuals(
                QpProblem(qp.hessian, qp.linear, qp.a_in, qp.b_in), z, sol.duals
            )
        return out

    a = qp.a_in if qp.a_in.size else np.zeros((0, qp.linear.shape[0]))
    b = qp.b_in if qp.a_in.size else np.zeros(0)
    h_inv = np.linalg.inv(qp.hessian)
    z, duals, status, iterations = _dual_active_set(h_inv, qp.linear, a, b, tol, max_iter)
    sol = QpSolution(
        z=z, duals=duals, status=status, iterations=iterations, objective=qp.objective(z)
    )
    if status != INFEASIBLE:
        sol.stationarity, sol.feasibility, sol.complementarity = kkt_residuals(qp, z, duals)
    return sol

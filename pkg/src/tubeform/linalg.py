"""Small dense linear-algebra kernel: symmetric eigensolver, Lyapunov solve, RK4.

Everything here operates on matrices of size <= ~12, so simple dense
algorithms (cyclic Jacobi, Kronecker vectorization) are used throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteState, NotHurwitz, NotSymmetric, SingularSystem

SYM_TOL = 1e-10


def is_hurwitz(a: np.ndarray, margin: float = 0.0) -> bool:
    """True iff every eigenvalue of ``a`` has real part < -margin."""
    return bool(np.max(np.linalg.eigvals(a).real) < -margin)


def eig_sym(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, orthonormal eigenvectors as columns).
    Raises NotSymmetric if ``m`` deviates from symmetry beyond 1e-10
    relative to its magnitude.
    """
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T)) > SYM_TOL * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-10")

    n = m.shape[0]
    a = 0.5 * (m + m.T)
    v = np.eye(n)
    if n == 1:
        return a.reshape(1).copy(), v

    tol = 1e-15 * max(np.linalg.norm(a, "fro"), 1e-300)
    for _ in range(60):  # cyclic sweeps; quadratic convergence, ~6 needed
        off = np.linalg.norm(a - np.diag(np.diag(a)), "fro")
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rp, rq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * rp - s * rq
                a[:, q] = s * rp + c * rq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sym_inv_sqrt(m: np.ndarray) -> np.ndarray:
    """P^{-1/2} for symmetric positive definite ``m`` via eig_sym."""
    w, v = eig_sym(m)
    if w[0] <= 0.0:
        raise SingularSystem("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def solve_continuous_lyapunov(acl: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve Acl^T P + P Acl = -Q for symmetric positive definite P.

    Uses Kronecker vectorization: (I (x) Acl^T + Acl^T (x) I) vec(P) = -vec(Q).
    The matrices here are at most ~10x10, so the dense (n^2 x n^2) solve is
    cheap. Raises NotHurwitz when Acl has an eigenvalue with Re >= 0 and
    SingularSystem when the Kronecker system cannot be solved.
    """
    acl = np.asarray(acl, dtype=float)
    q = np.asarray(q, dtype=float)
    n = acl.shape[0]
    if acl.shape != (n, n) or q.shape != (n, n):
        raise SingularSystem("Acl and Q must be square and equally sized")
    if not is_hurwitz(acl):
        raise NotHurwitz("Acl has an eigenvalue with nonnegative real part")

    eye = np.eye(n)
    k = np.kron(eye, acl.T) + np.kron(acl.T, eye)
    try:
        vec_p = np.linalg.solve(k, -q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("Kronecker Lyapunov system is singular") from exc
    if not np.all(np.isfinite(vec_p)):
        raise SingularSystem("Kronecker Lyapunov solve produced non-finite values")
    p = vec_p.reshape(n, n)
    return 0.5 * (p + p.T)


def rk4_step(f, x: np.ndarray, t: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta 4 step of dx/dt = f(x, t)."""
    x = np.asarray(x, dtype=float)
    k1 = f(x, t)
    k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(x + h * k3, t + h)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state after RK4 step at t={t}")
    return out

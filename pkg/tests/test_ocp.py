import numpy as np
import pytest

from tubeform.linalg import rk4_step
from tubeform.models import BrunovskyDims, chain_matrices
from tubeform.ocp import (
    OcpSpec,
    build_qp,
    discretize_error_dynamics,
    rollout_errors,
    rollout_objective,
    solve_ocp,
    terminal_ingredients,
)
from tubeform.qp import OPTIMAL, solve_qp


def make_spec(
    dims=None,
    horizon=5,
    ts=0.1,
    coupling=2.0,
    qr=1.0,
    r=0.1,
    rdelta=0.01,
    input_bound=50.0,
    with_terminal=True,
):
    dims = dims or BrunovskyDims(n=3, d=2, followers=1)
    ad, bd = discretize_error_dynamics(dims, ts)
    qr_m = qr * np.eye(dims.nd)
    r_m = r * np.eye(dims.d)
    if with_terminal:
        khat, pr, c_f = terminal_ingredients(ad, -coupling * bd, qr_m, r_m, input_bound)
    else:
        khat, pr, c_f = None, qr_m, np.inf
    return OcpSpec(
        dims=dims,
        horizon=horizon,
        ts=ts,
        qr=qr_m,
        r=r_m,
        rdelta=rdelta * np.eye(dims.d),
        pr=pr,
        input_bound=input_bound,
        terminal_gain=khat,
        terminal_level=c_f,
        coupling=coupling,
        ad=ad,
        bd=bd,
    )


class TestDiscretization:
    def test_single_integrator(self):
        dims = BrunovskyDims(n=1, d=1, followers=1)
        ad, bd = discretize_error_dynamics(dims, 0.1)
        assert np.allclose(ad, [[1.0]])
        assert np.allclose(bd, [[0.1]])

    def test_double_integrator(self):
        dims = BrunovskyDims(n=2, d=1, followers=1)
        ad, bd = discretize_error_dynamics(dims, 0.1)
        assert np.allclose(ad, [[1.0, 0.1], [0.0, 1.0]])
        assert np.allclose(bd, [[0.005], [0.1]])

    def test_matches_rk4_exactly(self):
        """Polynomial chain: RK4 over one step equals the exact map."""
        dims = BrunovskyDims(n=3, d=2, followers=1)
        ad, bd = discretize_error_dynamics(dims, 0.1)
        a0, g = chain_matrices(dims)
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.normal(size=6)
            u = rng.normal(size=2)
            exact = ad @ x + bd @ u
            stepped = rk4_step(lambda s, t: a0 @ s + g @ u, x, 0.0, 0.1)
            assert np.max(np.abs(exact - stepped)) < 1e-14


class TestTerminalIngredients:
    def test_scalar_dare_vs_bisection(self):
        dims = BrunovskyDims(n=1, d=1, followers=1)
        ad = np.array([[1.0]])
        bd = np.array([[0.1]])
        _, pr, _ = terminal_ingredients(ad, bd, np.eye(1), np.eye(1), 1.0)
        # scalar DARE: p = 1 + p - p^2 b^2/(1 + p b^2), root by bisection
        def resid(p):
            return 1.0 + p - p**2 * 0.01 / (1.0 + p * 0.01) - p
        lo, hi = 0.0, 1e6
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if resid(mid) > 0:
                lo = mid
            else:
                hi = mid
        assert pr[0, 0] == pytest.approx(0.5 * (lo + hi), abs=1e-9)

    def test_qr_zero_limit_with_stable_ad(self):
        ad = np.array([[0.5]])
        bd = np.array([[0.1]])
        _, pr, _ = terminal_ingredients(ad, bd, np.zeros((1, 1)), np.eye(1), 1.0)
        assert pr[0, 0] == pytest.approx(0.0, abs=1e-9)

    def test_closed_loop_stable(self):
        # effective input matrix is -coupling * Bd, so the loop closes as
        # Ad - (-c Bd) Khat
        spec = make_spec()
        closed = spec.ad + spec.coupling * spec.bd @ spec.terminal_gain
        assert np.max(np.abs(np.linalg.eigvals(closed))) < 1.0

    def test_terminal_set_invariance_and_input(self):
        """Random terminal-set states stay inside after one closed-loop step
        and their terminal law respects the tightened input bound."""
        spec = make_spec()
        rng = np.random.default_rng(1)
        w, v = np.linalg.eigh(spec.pr)
        closed = spec.ad + spec.coupling * spec.bd @ spec.terminal_gain
        for _ in range(100):
            u = rng.normal(size=6)
            u /= np.linalg.norm(u)
            e = np.sqrt(spec.terminal_level) * (v / np.sqrt(w)) @ (v.T @ u)
            e *= rng.random() ** 0.5
            level = e @ spec.pr @ e
            assert level <= spec.terminal_level * (1 + 1e-9)
            e_next = closed @ e
            assert e_next @ spec.pr @ e_next <= level * (1 + 1e-9)
            assert np.max(np.abs(spec.terminal_gain @ e)) <= spec.input_bound * (1 + 1e-9)


class TestBuildQp:
    def test_zero_weights_zero_input(self):
        spec = make_spec(qr=0.0, rdelta=0.0, with_terminal=True)
        e0 = np.zeros(6)
        s_seq = np.zeros((5, 2))
        qp, maps = build_qp(spec, e0, s_seq, np.zeros(2), [])
        sol = solve_qp(qp)
        z = maps.t_map @ sol.z + maps.t_off
        assert np.allclose(z, 0.0, atol=1e-12)

    def test_scalar_one_step_calculus(self):
        dims = BrunovskyDims(n=1, d=1, followers=1)
        ad, bd = discretize_error_dynamics(dims, 0.1)
        spec = OcpSpec(
            dims=dims, horizon=1, ts=0.1,
            qr=np.eye(1), r=np.eye(1), rdelta=np.zeros((1, 1)), pr=np.eye(1),
            input_bound=np.inf, terminal_gain=None, terminal_level=np.inf,
            coupling=-1.0,  # e1 = e0 + 0.1 v
            ad=ad, bd=bd,
        )
        qp, maps = build_qp(
            spec, np.array([1.0]), np.zeros((1, 1)), np.zeros(1), [],
            use_terminal_law=False,
        )
        sol = solve_qp(qp)
        assert sol.z[0] == pytest.approx(-0.1 / 1.01, abs=1e-9)

    def test_inactive_barrier_row_no_change(self):
        spec = make_spec()
        e0 = np.array([1.0, -0.5, 0.2, 0.0, 0.0, 0.1])
        s_seq = np.zeros((5, 2))
        qp0, m0 = build_qp(spec, e0, s_seq, np.zeros(2), [])
        row = (2, np.array([1.0, 0.0]), 1e6)  # v_2,x >= -1e6: never active
        qp1, m1 = build_qp(spec, e0, s_seq, np.zeros(2), [row])
        z0 = m0.t_map @ solve_qp(qp0).z + m0.t_off
        z1 = m1.t_map @ solve_qp(qp1).z + m1.t_off
        assert np.allclose(z0, z1, atol=1e-9)

    def test_condensed_objective_equals_rollout(self):
        spec = make_spec()
        rng = np.random.default_rng(4)
        e0 = rng.normal(size=6)
        s_seq = rng.normal(size=(5, 2)) * 0.2
        v_prev = rng.normal(size=2) * 0.1
        qp, maps = build_qp(spec, e0, s_seq, v_prev, [])
        sol = solve_qp(qp)
        z = maps.t_map @ sol.z + maps.t_off
        inputs = z.reshape(5, 2)
        explicit = rollout_objective(spec, e0, s_seq, v_prev, inputs)
        assert sol.objective == pytest.approx(explicit, abs=1e-9 * max(1.0, explicit))

    def test_terminal_law_substitution_holds(self):
        spec = make_spec()
        rng = np.random.default_rng(5)
        e0 = rng.normal(size=6) * 0.5
        s_seq = rng.normal(size=(5, 2)) * 0.1
        qp, maps = build_qp(spec, e0, s_seq, np.zeros(2), [])
        sol = solve_qp(qp)
        z = maps.t_map @ sol.z + maps.t_off
        inputs = z.reshape(5, 2)
        errors = rollout_errors(spec, e0, s_seq, inputs)
        assert np.allclose(inputs[-1], -spec.terminal_gain @ errors[-1], atol=1e-9)


class TestSolveOcp:
    def test_equilibrium_stays_zero(self):
        spec = make_spec()
        sol = solve_ocp(
            spec,
            e0=np.zeros(6),
            x0_nominal=np.zeros(6),
            s_seq=np.zeros((5, 2)),
            ff_seq=np.zeros((5, 2)),
            v_prev=np.zeros(2),
            warm_inputs=np.zeros((5, 2)),
        )
        assert sol.status == OPTIMAL
        assert np.allclose(sol.inputs, 0.0, atol=1e-10)
        assert sol.objective == pytest.approx(0.0, abs=1e-12)

    def test_unconstrained_matches_normal_equations(self):
        """No active rows: the plan equals the dense least-squares solution."""
        spec = make_spec(input_bound=1e9)
        rng = np.random.default_rng(6)
        e0 = rng.normal(size=6) * 0.3
        s_seq = np.zeros((5, 2))
        v_prev = np.zeros(2)
        sol = solve_ocp(
            spec, e0, np.zeros(6), s_seq, np.zeros((5, 2)), v_prev,
            np.zeros((5, 2)),
        )
        qp, maps = build_qp(spec, e0, s_seq, v_prev, [])
        z_free = np.linalg.solve(qp.hessian, -qp.linear)
        z = maps.t_map @ z_free + maps.t_off
        assert np.allclose(sol.inputs.reshape(-1), z, atol=1e-7)

    def test_head_on_obstacle_rows_satisfied(self):
        """Rows assembled at the final linearization hold with slack >= -1e-6."""
        from tubeform.barrier import EcbfCoefficients, QuadraticBarrier, assemble_row, margin_obstacle
        from tubeform.models import Obstacle

        dims = BrunovskyDims(n=3, d=2, followers=1)
        spec = make_spec(dims=dims, coupling=1.0)
        barrier = QuadraticBarrier.for_obstacle(
            dims, Obstacle(center=(2.0, 0.0), radius=0.8)
        )
        kappa = EcbfCoefficients.from_poles((-1.5, -2.5, -3.5))
        x0 = np.array([0.0, 0.0, 0.5, 0.0, 0.0, 0.0])  # heading at the obstacle
        e0 = np.array([0.0, 0.5, 0.0, 0.0, 0.0, 0.0])

        def rows(states):
            out = []
            for l in range(spec.horizon):
                grad = barrier.gradient_self(states[l])
                row = assemble_row(
                    barrier, kappa, states[l], None,
                    margin_obstacle(0.1, grad), drift_top_self=np.zeros(2),
                )
                out.append((l, row.a, row.b))
            return out

        sol = solve_ocp(
            spec, e0, x0, np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(2),
            np.zeros((5, 2)), row_builder=rows,
        )
        assert sol.status == OPTIMAL
        assert sol.row_slack >= -1e-6

    def test_adverse_error_conflict_is_infeasible(self):
        """An error pulling hard into the obstacle conflicts with the terminal
        law: the solve reports Infeasible so the caller can fall back."""
        from tubeform.barrier import EcbfCoefficients, QuadraticBarrier, assemble_row, margin_obstacle
        from tubeform.models import Obstacle
        from tubeform.qp import INFEASIBLE

        dims = BrunovskyDims(n=3, d=2, followers=1)
        spec = make_spec(dims=dims, coupling=1.0)
        barrier = QuadraticBarrier.for_obstacle(dims, Obstacle(center=(2.0, 0.0), radius=0.8))
        kappa = EcbfCoefficients.from_poles((-1.5, -2.5, -3.5))
        x0 = np.array([0.0, 0.0, 1.5, 0.0, 0.0, 0.0])
        e0 = np.array([2.0, 0.0, 1.0, 0.0, 0.0, 0.0])

        def rows(states):
            out = []
            for l in range(spec.horizon):
                grad = barrier.gradient_self(states[l])
                row = assemble_row(
                    barrier, kappa, states[l], None,
                    margin_obstacle(0.1, grad), drift_top_self=np.zeros(2),
                )
                out.append((l, row.a, row.b))
            return out

        sol = solve_ocp(
            spec, e0, x0, np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(2),
            np.zeros((5, 2)), row_builder=rows,
        )
        assert sol.status == INFEASIBLE

    def test_sqp_fixed_point(self):
        """Re-linearizing at the converged solution changes inputs < 1e-5."""
        from tubeform.barrier import EcbfCoefficients, QuadraticBarrier, assemble_row
        from tubeform.models import Obstacle

        dims = BrunovskyDims(n=3, d=2, followers=1)
        spec = make_spec(dims=dims, coupling=1.0)
        barrier = QuadraticBarrier.for_obstacle(dims, Obstacle(center=(1.5, 0.2), radius=0.6))
        kappa = EcbfCoefficients.from_poles((-1.5, -2.5, -3.5))
        x0 = np.array([0.0, 0.0, 1.2, 0.2, 0.0, 0.0])
        e0 = np.array([1.5, 0.5, 0.8, 0.0, 0.0, 0.0])

        def rows(states):
            out = []
            for l in range(spec.horizon):
                row = assemble_row(
                    barrier, kappa, states[l], None, 0.05, drift_top_self=np.zeros(2)
                )
                out.append((l, row.a, row.b))
            return out

        warm = np.zeros((5, 2))
        for _ in range(8):  # chain warm starts until the pass loop converges
            sol = solve_ocp(
                spec, e0, x0, np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(2),
                warm, row_builder=rows,
            )
            warm = sol.inputs
            if sol.converged:
                break
        assert sol.converged
        again = solve_ocp(
            spec, e0, x0, np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(2),
            sol.inputs, row_builder=rows,
        )
        assert np.max(np.abs(again.inputs - sol.inputs)) < 1e-5

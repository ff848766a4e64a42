import json
import math

import numpy as np
import pytest

from tubeform.pipeline import certify_scenario
from tubeform.scenario import load_scenario, parse_scenario
from tubeform.sim import SimConfig, SimWorld, apply_control, run_simulation, trace_metrics

SMOKE = "scenarios/smoke_scenario.json"


def equilibrium_doc():
    """Static leader, zero disturbances, followers parked on their slots."""
    doc = json.loads(open(SMOKE).read())
    zero_dist = {"kind": "sinusoid", "amp": [0.0, 0.0], "freq": [0.0, 0.0], "phase": [0.0, 0.0]}
    doc["leader"]["dynamics"]["axes"] = [[], []]
    doc["leader"]["dynamics"]["outer_gain"] = 1.0
    doc["leader"]["disturbance"] = zero_dist
    doc["leader"]["disturbance_bound"] = 0.0
    doc["leader"]["lipschitz"] = 0.0
    # a drift-free leader needs a declared stabilizing component for its
    # nominal-deviation Lyapunov pair; poles (-1,-2,-3) per axis
    doc["leader"]["tube"]["stabilizer"] = [
        [6.0, 0.0, 11.0, 0.0, 6.0, 0.0],
        [0.0, 6.0, 0.0, 11.0, 0.0, 6.0],
    ]
    doc["obstacles"] = []
    for agent in doc["agents"]:
        agent["dynamics"]["axes"] = [[], []]
        agent["disturbance"] = zero_dist
        agent["disturbance_bound"] = 0.0
        agent["lipschitz"] = 0.0
    doc["initial_states"]["leader"] = [0.0] * 6
    doc["initial_states"]["followers"] = [
        [-1.2, 0.8, 0, 0, 0, 0],
        [1.2, 0.8, 0, 0, 0, 0],
    ]
    doc["sim"]["t_end"] = 1.0
    return doc


class TestApplyControl:
    def test_identity_cancellation(self):
        gain = np.ones((2, 6))
        x = np.zeros(6)
        f_val = np.array([1.7, -0.3])
        u = apply_control(gain, np.zeros(2), x, x, f_val, f_val, True)
        assert np.allclose(u, 0.0)

    def test_feedforward_off(self):
        gain = np.eye(2, 6)
        x = np.ones(6)
        xb = np.zeros(6)
        v = np.array([0.5, -0.5])
        u = apply_control(gain, v, x, xb, None, None, False)
        assert np.allclose(u, v - gain @ (x - xb))


class TestEquilibrium:
    def test_zero_error_preserved(self):
        cfg = parse_scenario(json.dumps(equilibrium_doc()))
        cert = certify_scenario(cfg, spot_checks=False)
        result = run_simulation(cfg, cert)
        assert not result.violations
        assert float(np.max(result.trace.col("ferr_stacked"))) <= 1e-9

    def test_metrics_of_static_run(self):
        doc = equilibrium_doc()
        doc["obstacles"] = [{"center": [5.0, 0.0], "radius": 1.0, "inflation": 0.1}]
        cfg = parse_scenario(json.dumps(doc))
        cert = certify_scenario(cfg, spot_checks=False)
        result = run_simulation(cfg, cert)
        m = trace_metrics(result.trace)
        assert m["final_mean_stacked_error"] <= 1e-9
        # clearance = geometric distance - physical radius / - d_safe
        d1 = math.hypot(5.0 - 1.2, 0.8)
        assert m["min_obstacle_clearance"] == pytest.approx(d1 - 1.0, abs=1e-6)
        assert m["min_pairwise_clearance"] == pytest.approx(2.4 - 0.25, abs=1e-6)


class TestSingleAgentObstacle:
    def test_head_on_clearance_positive(self):
        doc = equilibrium_doc()
        doc["dims"]["followers"] = 1
        doc["agents"] = doc["agents"][:1]
        doc["graph"] = {"adjacency": [[0.0]], "b0": [1.0], "nu1": 1.0, "nu2": 1.0}
        doc["formation"]["offsets"] = [
            [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            [[3.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        ]
        # slightly off-axis so the dodge direction is well defined
        doc["obstacles"] = [{"center": [1.5, 0.15], "radius": 0.4, "inflation": 0.1}]
        doc["initial_states"]["followers"] = [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]
        doc["sim"]["t_end"] = 12.0
        cfg = parse_scenario(json.dumps(doc))
        cert = certify_scenario(cfg, spot_checks=False)
        result = run_simulation(cfg, cert)
        assert float(np.min(result.trace.col("clr_obs"))) > 0.0
        # and the agent actually made it to the far side
        assert result.trace.col("x1_10")[-1] > 2.0


class TestDeviationDynamics:
    def test_closed_loop_matches_linear_form(self):
        """Fine-integrated deviation dynamics match the certified linear form:
        d(dx)/dt = Acl dx + G (leader-drift mismatch + w)."""
        cfg = load_scenario(SMOKE)
        cert = certify_scenario(cfg, spot_checks=False)
        world = SimWorld(cfg, cert, SimConfig.from_scenario(cfg))
        for k in range(3):
            world.step(k)
        state = world._pack()
        t = 3 * cfg.sim.ts
        deriv = world._world_derivative(state, t, world.v_applied)
        nd = world.nd
        a0 = np.zeros((nd, nd))
        a0[: nd - 2, 2:] = np.eye(nd - 2)
        g_sel = np.zeros((nd, 2))
        g_sel[-2:] = np.eye(2)
        acl = cert.tubes[0].lyap.acl
        base = 2 * nd
        for i in range(world.n):
            xo = base + i * 3 * nd
            dx = state[xo : xo + nd] - state[xo + nd : xo + 2 * nd]
            ddx = deriv[xo : xo + nd] - deriv[xo + nd : xo + 2 * nd]
            anchor = state[xo + 2 * nd : xo + 3 * nd]
            pinned = world.graph.b0[i] > 0
            ff_state = state[:nd] if pinned else anchor
            mismatch = world.models[0].drift(ff_state, t) - world.models[0].drift(anchor, t)
            w = world.models[i + 1].disturbance(t)
            expected = acl @ dx + g_sel @ (mismatch + w)
            assert np.max(np.abs(ddx - expected)) < 1e-9


class TestDeterminism:
    def test_bit_identical_short_runs(self):
        cfg = load_scenario(SMOKE)
        cert = certify_scenario(cfg, spot_checks=False)
        a = run_simulation(cfg, cert)
        b = run_simulation(cfg, cert)
        assert np.array_equal(a.trace.data, b.trace.data)


class TestTubeMonitoring:
    def test_smoke_occupancy_bounded(self):
        cfg = load_scenario(SMOKE)
        cert = certify_scenario(cfg, spot_checks=False)
        result = run_simulation(cfg, cert)
        m = trace_metrics(result.trace)
        for col, val in m["max_tube_occupancy"].items():
            assert val <= 1.0 + 1e-6, col

    def test_margin_violation_recorded(self):
        """Declaring an impossible margin radius trips the runtime monitor."""
        doc = json.loads(open(SMOKE).read())
        for agent in doc["agents"]:
            agent["margin_radius"] = 1e-9
        cfg = parse_scenario(json.dumps(doc))
        cert = certify_scenario(cfg, spot_checks=False)
        result = run_simulation(cfg, cert)
        assert any(v.kind == "margin_radius" for v in result.violations)


class TestTraceRoundTrip:
    def test_csv_round_trip(self, tmp_path):
        cfg = load_scenario(SMOKE)
        cert = certify_scenario(cfg, spot_checks=False)
        result = run_simulation(cfg, cert)
        path = tmp_path / "trace.csv"
        result.trace.to_csv(path)
        from tubeform.sim import SimTrace

        back = SimTrace.from_csv(path)
        assert back.columns == result.trace.columns
        assert np.allclose(back.data, result.trace.data, rtol=0, atol=0)
        assert back.metadata["scenario"] == "smoke_scenario"

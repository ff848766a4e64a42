import math

import numpy as np
import pytest

from tubeform.errors import ScenarioError
from tubeform.models import (
    AgentModel,
    Box,
    BrunovskyDims,
    DriftSpec,
    DriftTerm,
    FormationSpec,
    Obstacle,
    SinusoidDisturbance,
    chain_matrices,
    estimate_lipschitz,
)

DIMS = BrunovskyDims(n=3, d=2, followers=5)


def cubic_damped_drift(gain=1.0):
    """-gain * (x3 + 0.49 x1 + 1.12 x2 + 0.12 x1^3 - 0.25 tanh(0.6 x1)) per axis."""
    axes = []
    for ax in range(2):
        axes.append(
            (
                DriftTerm(form="state", coeff=1.0, order=3, axis=ax),
                DriftTerm(form="state", coeff=0.49, order=1, axis=ax),
                DriftTerm(form="state", coeff=1.12, order=2, axis=ax),
                DriftTerm(form="cubic", coeff=0.12, order=1, weights=(1.0, 0.0) if ax == 0 else (0.0, 1.0)),
                DriftTerm(form="tanh", coeff=-0.25, scale=0.6, order=1, axis=ax),
            )
        )
    return DriftSpec(dims=DIMS, outer_gain=gain, axes=tuple(axes))


class TestChainMatrices:
    def test_shapes_and_structure(self):
        a0, g = chain_matrices(DIMS)
        assert a0.shape == (6, 6) and g.shape == (6, 2)
        assert np.allclose(a0[0:2, 2:4], np.eye(2))
        assert np.allclose(a0[2:4, 4:6], np.eye(2))
        assert np.allclose(a0[4:6, :], 0.0)
        assert np.allclose(g[4:6], np.eye(2))
        assert np.linalg.norm(g, 2) == pytest.approx(1.0)

    def test_upshift_action(self):
        a0, g = chain_matrices(DIMS)
        x = np.arange(6.0)
        assert np.allclose(a0 @ x, np.concatenate([x[2:], np.zeros(2)]))


class TestDrift:
    def test_hand_value(self):
        drift = cubic_damped_drift()
        x = np.array([1.0, -2.0, 0.5, 0.0, 0.25, 1.0])
        expected0 = -(0.25 + 0.49 * 1.0 + 1.12 * 0.5 + 0.12 * 1.0 - 0.25 * math.tanh(0.6))
        expected1 = -(1.0 + 0.49 * -2.0 + 1.12 * 0.0 + 0.12 * -8.0 - 0.25 * math.tanh(-1.2))
        assert np.allclose(drift(x, 0.0), [expected0, expected1])

    def test_sinusoid_term_time_only(self):
        term = DriftTerm(form="sin_t", coeff=-0.4, freq=0.8, phase=0.5)
        assert term.value(DIMS, np.zeros(6), 2.0) == pytest.approx(-0.4 * math.sin(2.1))
        assert np.allclose(term.gradient(DIMS, np.zeros(6)), 0.0)

    def test_cross_coupling_term(self):
        term = DriftTerm(form="sq_tanh", coeff=-0.15, order=1, sq_axis=1, axis=0, scale=1.0)
        x = np.array([0.5, 2.0, 0, 0, 0, 0.0])
        assert term.value(DIMS, x, 0.0) == pytest.approx(-0.15 * 4.0 * math.tanh(0.5))

    def test_jacobian_matches_finite_differences(self):
        drift = cubic_damped_drift()
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = rng.normal(size=6)
            jac = drift.jacobian(x)
            step = 1e-6
            for col in range(6):
                bump = np.zeros(6)
                bump[col] = step
                fd = (drift(x + bump, 0.0) - drift(x - bump, 0.0)) / (2 * step)
                assert np.allclose(jac[:, col], fd, atol=1e-6)


class TestLipschitzEstimate:
    def test_linear_drift_exact(self):
        dims = BrunovskyDims(n=1, d=1, followers=1)
        drift = DriftSpec(
            dims=dims,
            outer_gain=1.0,
            axes=((DriftTerm(form="state", coeff=2.0, order=1, axis=0),),),
        )
        box = Box(lower=(-1.0,), upper=(1.0,))
        # |df/dx| = 2 everywhere; estimate = 2 * 1.25
        assert estimate_lipschitz(drift, box) == pytest.approx(2.5)

    def test_cubic_peaks_at_corner(self):
        dims = BrunovskyDims(n=1, d=1, followers=1)
        drift = DriftSpec(
            dims=dims,
            outer_gain=1.0,
            axes=((DriftTerm(form="cubic", coeff=1.0, order=1, weights=(1.0,)),),),
        )
        box = Box(lower=(-2.0,), upper=(2.0,))
        assert estimate_lipschitz(drift, box) == pytest.approx(12.0 * 1.25)


class TestAgentModel:
    def make(self, bound=0.25, lipschitz=4.0):
        return AgentModel(
            id=1,
            dims=DIMS,
            drift=cubic_damped_drift(),
            drift_lipschitz=lipschitz,
            disturbance=SinusoidDisturbance(
                amp=(0.2, 0.15), freq=(0.9, 1.1), phase=(0.0, math.pi / 7)
            ),
            disturbance_bound=bound,
            operating_box=Box(lower=(-1.0,) * 6, upper=(1.0,) * 6),
        )

    def test_disturbance_bound_holds(self):
        self.make().check_disturbance_bound(30.0)

    def test_disturbance_bound_violated(self):
        with pytest.raises(ScenarioError):
            self.make(bound=0.1).check_disturbance_bound(30.0)

    def test_lipschitz_spot_check(self):
        rng = np.random.default_rng(0)
        self.make().check_lipschitz(rng)
        with pytest.raises(ScenarioError):
            self.make(lipschitz=0.2).check_lipschitz(np.random.default_rng(0))


class TestFormationAndObstacle:
    def test_offsets_shape(self):
        offsets = np.zeros((6, 3, 2))
        offsets[1, 0] = [-9.0, 2.0]
        spec = FormationSpec(dims=DIMS, offsets=offsets)
        assert np.allclose(spec.offset(1, 1), [-9.0, 2.0])
        assert np.allclose(spec.offset(1, 2), 0.0)
        assert spec.stacked(1)[0] == -9.0

    def test_effective_radius(self):
        assert Obstacle(center=(1.0, 1.0), radius=0.5, inflation=0.15).effective_radius == 0.65

    def test_invalid_radius(self):
        with pytest.raises(ScenarioError):
            Obstacle(center=(0.0, 0.0), radius=0.0)

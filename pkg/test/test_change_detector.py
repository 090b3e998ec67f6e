"""Tests for src/core/change_detector.py."""

import numpy as np
import numpy.testing as npt
import pytest

from src.config.constants import DT, GRAVITY
from src.core.change_detector import (
    obs_likelihood, change_detector, tilt_bias, inject_tactile_bias, likelihood_trace
)
from src.core.dual_filter import DualFilter
from src.core.errors import DomainError
from src.core.process_models import AnalyticalProcessModel
from src.core.push_simulator import ActionAffordance, object_cloud, rollout
from src.config.constants import ActionKind


class TestObsLikelihood:

    def test_zero_residual(self):
        z = np.linspace(0, 1, 4098)
        assert obs_likelihood(z, z, np.full(4098, 0.01)) == 1.0

    def test_unit_mahalanobis(self):
        r = np.full(4098, 0.1)
        assert obs_likelihood(np.zeros(4098), r, np.full(4098, 0.01)) == pytest.approx(np.exp(-0.5))

    def test_monotone(self):
        R = np.full(10, 0.5)
        values = [obs_likelihood(np.zeros(10), np.full(10, s), R) for s in (0.0, 0.1, 0.5, 1.0, 3.0)]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert all(0 < v <= 1 for v in values)

    def test_invalid(self):
        with pytest.raises(DomainError):
            obs_likelihood(np.zeros(3), np.zeros(4), np.ones(3))
        with pytest.raises(DomainError):
            obs_likelihood(np.zeros(3), np.zeros(3), np.zeros(3))


class TestChangeDetector:

    def test_constant_stream(self):
        decision = change_detector(np.full(60, 0.8), window=5)
        assert decision.decided and not decision.changed and decision.onset is None

    def test_step_drop(self):
        stream = np.ones(60)
        drop = int(round(2.0 / DT))
        stream[drop:] = 0.3
        decision = change_detector(stream, window=5, dt=DT, calibration_seconds=1.0, ratio=0.5)
        assert decision.changed
        assert drop <= decision.onset <= drop + 5
        assert decision.onset == drop + 3
        assert decision.calibration == pytest.approx(1.0)

    def test_short_stream(self):
        decision = change_detector(np.ones(12), window=5, calibration_seconds=1.0)
        assert not decision.decided and not decision.changed

    def test_window_minimum(self):
        with pytest.raises(DomainError):
            change_detector(np.ones(60), window=4)

    def test_mild_dip_ignored(self):
        stream = np.ones(60)
        stream[35:] = 0.6
        assert not change_detector(stream, window=5).changed


class TestTilt:

    def test_bias_magnitude(self, block_object):
        bias = tilt_bias(block_object, np.pi / 2)
        npt.assert_allclose(bias, [0.0, 0.2 * 1.0 * GRAVITY * 0.4], atol=1e-12)

    def test_injection(self, block_object):
        traj = rollout(block_object, ActionAffordance(ActionKind.PUSH, (0.35, 0.1), 0.0, 0.02), steps=6)
        biased = inject_tactile_bias(traj, [1.0, -1.0], 3)
        npt.assert_array_equal(biased.observations[:3], traj.observations[:3])
        npt.assert_allclose(biased.observations[3:, -2:] - traj.observations[3:, -2:], [[1.0, -1.0]] * 3)
        npt.assert_array_equal(biased.observations[3:, :-2], traj.observations[3:, :-2])


class TestLikelihoodTrace:

    def test_trace_from_filter_run(self, block_object):
        push = ActionAffordance(ActionKind.PUSH, (0.35, 0.1), 0.0, 0.02)
        traj = rollout(block_object, push, steps=4, seed=2)
        flt = DualFilter(AnalyticalProcessModel(), block_object, object_cloud(block_object), num_points=12)
        starts = [push.robot_position(t - traj.dt) for t in traj.times]
        results = flt.run(flt.initial_belief(), push, traj.observations, starts)
        trace = likelihood_trace(results, traj.observations)
        assert trace.visual.shape == trace.tactile.shape == (4,)
        assert np.all((trace.visual > 0) & (trace.visual <= 1))
        assert np.all((trace.tactile > 0) & (trace.tactile <= 1))

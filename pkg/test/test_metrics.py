"""Tests for src/core/metrics.py."""

import numpy as np
import numpy.testing as npt
import pytest

from src.core.errors import DomainError
from src.core.metrics import (
    nrmse, com_error, tracking_mse, param_ranges, evaluate_params, summarize, MetricsRecord
)


class TestNRMSE:

    def test_exact(self):
        gt = np.array([[1.0, 0.3], [0.5, 0.2]])
        npt.assert_array_equal(nrmse(gt, gt, [1.0, 1.0]), [0.0, 0.0])

    def test_error_equal_to_range(self):
        gt = np.array([[1.0, 0.3], [0.5, 0.2]])
        npt.assert_allclose(nrmse(gt + [1.8, 0.5], gt, [1.8, 0.5]), [1.0, 1.0])

    def test_hand_oracle(self):
        pred = np.array([[1.0], [2.0], [4.0]])
        gt = np.array([[1.0], [1.0], [1.0]])
        # sqrt((0 + 1 + 9) / 3) / 2
        npt.assert_allclose(nrmse(pred, gt, [2.0]), [np.sqrt(10.0 / 3.0) / 2.0])

    def test_zero_range(self):
        with pytest.raises(DomainError):
            nrmse([1.0], [1.0], [0.0])

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            nrmse([[1.0, 2.0]], [[1.0]], [1.0])


class TestErrors:

    def test_com_error(self):
        npt.assert_allclose(com_error([[0.03, 0.04]], [[0.0, 0.0]]), [0.05])

    def test_tracking_mse(self):
        pred = np.zeros((4, 1, 3))
        gt = np.zeros((4, 1, 3))
        gt[..., 0] = 0.1
        gt[..., 2] = 3.0
        assert tracking_mse(pred, gt) == pytest.approx(0.01)


class TestRecords:

    def test_param_ranges(self, block_object, articulated_pair):
        ranges = param_ranges([block_object, articulated_pair])
        assert ranges.shape == (5,)
        # every link has mass 1 and friction 0.4, so zero ranges fall back to 1
        npt.assert_array_equal(ranges[:2], [1.0, 1.0])
        assert ranges[4] == 1.0

    def test_evaluate_exact(self, articulated_pair):
        rec = evaluate_params('pair', articulated_pair.param_vector(), articulated_pair, np.ones(5))
        assert rec.overall == 0.0
        assert rec.nrmse['joint_friction'] == 0.0
        assert rec.com_error == 0.0

    def test_evaluate_mass_error(self, block_object):
        phi = block_object.param_vector()
        phi[0] += 0.9
        rec = evaluate_params('block', phi, block_object, [1.8, 0.5, 0.05, 0.05, 0.8])
        assert rec.nrmse['mass'] == pytest.approx(0.5)
        assert 'joint_friction' not in rec.nrmse
        assert rec.overall == pytest.approx(0.125)

    def test_negative_metric(self):
        with pytest.raises(DomainError):
            MetricsRecord('x', tracking_mse=-1.0)

    def test_summary_skips_failures(self):
        records = [MetricsRecord('a', {'mass': 0.2, 'friction': 0.4}, com_error=0.01),
                   MetricsRecord('b', {'mass': 0.4, 'friction': 0.2}, com_error=0.03),
                   MetricsRecord('c', failed=True, message='boom')]
        summary = summarize(records)
        assert summary['mass'] == pytest.approx(0.3)
        assert summary['overall'] == pytest.approx(0.3)
        assert summary['com_error'] == pytest.approx(0.02)
        assert summarize([records[2]]) == {}

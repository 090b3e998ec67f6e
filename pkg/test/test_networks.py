"""Tests for src/core/networks.py."""

import numpy as np
import pytest
import torch

from src.config.constants import (
    EDGE_DIM, ACTION_ENCODING_DIM, VARIANCE_FLOOR, INITIAL_VISUAL_VAR, INITIAL_TACTILE_VAR
)
from src.core.errors import DomainError
from src.core.networks import (
    DTYPE, DenseNet3, GraphNets, TacNet, ObsNoiseNet, make_activation, inverse_softplus,
    positive_variance, encode_action
)


@pytest.fixture(autouse=True)
def seeded():
    torch.manual_seed(0)


class TestDenseNet3:

    def test_shapes(self):
        net = DenseNet3(7, 3, hidden=16)
        out = net(torch.randn(5, 7, dtype=DTYPE))
        assert out.shape == (5, 3)
        assert out.dtype == DTYPE

    def test_wrong_width(self):
        with pytest.raises(DomainError):
            DenseNet3(7, 3)(torch.zeros(2, 6, dtype=DTYPE))

    def test_invalid_widths(self):
        with pytest.raises(DomainError):
            DenseNet3(0, 3)

    def test_zero_output(self):
        net = DenseNet3(4, 2).zero_output()
        out = net(torch.randn(10, 4, dtype=DTYPE))
        assert torch.count_nonzero(out) == 0

    def test_unknown_activation(self):
        with pytest.raises(DomainError):
            make_activation('relu6')


class TestPositivity:

    def test_inverse_softplus(self):
        for y in (1e-4, 0.3, 2.0):
            assert np.isclose(float(torch.nn.functional.softplus(torch.tensor(inverse_softplus(y)))), y)

    def test_floor(self):
        raw = torch.tensor([-1e3, -50.0, 0.0, 10.0], dtype=DTYPE)
        assert torch.all(positive_variance(raw) > 0)
        assert torch.all(positive_variance(raw) >= VARIANCE_FLOOR)


class TestTacNet:

    def test_zero_edge_zero_force(self):
        net = TacNet().zero_output()
        mean, var = net(torch.zeros(3, EDGE_DIM, dtype=DTYPE), torch.zeros(3, ACTION_ENCODING_DIM, dtype=DTYPE))
        assert torch.count_nonzero(mean) == 0
        assert mean.shape == (3, 2)
        assert torch.all(var > VARIANCE_FLOOR)

    def test_variance_positive_for_random_inputs(self):
        net = TacNet()
        edge = 100 * torch.randn(1000, EDGE_DIM, dtype=DTYPE)
        enc = 100 * torch.randn(1000, ACTION_ENCODING_DIM, dtype=DTYPE)
        _, var = net(edge, enc)
        assert torch.all(var > VARIANCE_FLOOR)


class TestObsNoiseNet:

    def test_initial_variances(self):
        net = ObsNoiseNet()
        with torch.no_grad():
            for layer in net.tactile:
                if isinstance(layer, torch.nn.Linear):
                    layer.weight.zero_()
            net.visual_head.weight.zero_()
            var_v, var_t = net(torch.rand(2, 4096, dtype=DTYPE), torch.rand(2, 2, dtype=DTYPE))
        assert np.allclose(var_v.numpy(), INITIAL_VISUAL_VAR)
        assert np.allclose(var_t.numpy(), INITIAL_TACTILE_VAR)

    def test_positive_for_random_inputs(self):
        net = ObsNoiseNet()
        with torch.no_grad():
            var_v, var_t = net(torch.rand(64, 4096, dtype=DTYPE), 10 * torch.randn(10000, 2, dtype=DTYPE))
        assert torch.all(var_v > 0) and torch.all(var_t > 0)

    def test_constant_batch_constant_output(self):
        net = ObsNoiseNet()
        image = torch.rand(1, 4096, dtype=DTYPE).repeat(4, 1)
        force = torch.tensor([[0.3, -0.1]], dtype=DTYPE).repeat(4, 1)
        with torch.no_grad():
            var_v, var_t = net(image, force)
        assert torch.allclose(var_v, var_v[0].expand(4))
        assert torch.allclose(var_t, var_t[0].expand(4))

    def test_single_observation(self):
        with torch.no_grad():
            var_v, var_t = ObsNoiseNet()(torch.zeros(4096, dtype=DTYPE), torch.zeros(2, dtype=DTYPE))
        assert var_v.shape == (1,) and var_t.shape == (1,)

    def test_wrong_sizes(self):
        with pytest.raises(DomainError):
            ObsNoiseNet()(torch.zeros(1, 1024, dtype=DTYPE), torch.zeros(1, 2, dtype=DTYPE))


class TestGraphNets:

    def test_zero_output(self):
        nets = GraphNets(hidden=8).zero_output()
        e = nets.edge(torch.randn(2, 9, dtype=DTYPE), torch.randn(2, 9, dtype=DTYPE),
                      torch.rand(2, dtype=DTYPE))
        assert e.shape == (2, EDGE_DIM)
        assert torch.count_nonzero(e) == 0
        n = nets.node(torch.randn(2, 9, dtype=DTYPE), e)
        assert n.shape == (2, 6)


class TestEncodeAction:

    def test_link_frame(self):
        poses = torch.tensor([[1.0, 0.0, np.pi / 2]], dtype=DTYPE)
        enc = encode_action(np.pi / 2, 0.02, poses, (1.0, -0.1))
        # robot 10 cm behind the link along its local x axis, heading along it
        np.testing.assert_allclose(enc[0].numpy(), [-0.1, 0.0, 0.0, 1.0, 0.02], atol=1e-12)

    def test_batch(self):
        poses = torch.zeros(7, 3, dtype=DTYPE)
        assert encode_action(0.0, 0.02, poses, (0.0, 0.0)).shape == (7, ACTION_ENCODING_DIM)

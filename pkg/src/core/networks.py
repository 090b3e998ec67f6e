"""
Small trainable function approximators used by the learned process and noise models.

All modules are built in float64 so they can be chained with the filter
arithmetic without casts.
"""

import logging
import math
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config.constants import (
    HIDDEN_WIDTH, EDGE_DIM, NODE_DIM, ACTION_ENCODING_DIM, VARIANCE_FLOOR, OBS_IMAGE_SIZE,
    INITIAL_VISUAL_VAR, INITIAL_TACTILE_VAR, CONV_CHANNELS, TACTILE_NOISE_HIDDEN
)
from .errors import DomainError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

_ACTIVATIONS = {
    'tanh': nn.Tanh,
    'silu': nn.SiLU,
    'softplus': nn.Softplus,
}


def make_activation(name: str) -> nn.Module:
    try:
        return _ACTIVATIONS[name]()
    except KeyError:
        raise DomainError(f"Unknown activation '{name}', expected one of {sorted(_ACTIVATIONS)}")


def inverse_softplus(y: float) -> float:
    """x with softplus(x) = y, for y > 0."""
    return y + math.log(-math.expm1(-y))


def positive_variance(raw: torch.Tensor) -> torch.Tensor:
    """Map unconstrained outputs to variances above VARIANCE_FLOOR."""
    return F.softplus(raw) + VARIANCE_FLOOR


class DenseNet3(nn.Module):
    """
    Three-layer feedforward network in -> hidden -> hidden -> out.

    Linear layers keep torch's default fan-in scaled initialization.
    """

    def __init__(self, in_dim: int, out_dim: int, hidden: int = HIDDEN_WIDTH,
                 activation: str = 'tanh'):
        super().__init__()
        if in_dim < 1 or out_dim < 1 or hidden < 1:
            raise DomainError(f"Invalid layer widths ({in_dim}, {hidden}, {out_dim})")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.layers = nn.Sequential(
            nn.Linear(in_dim, hidden, dtype=DTYPE),
            make_activation(activation),
            nn.Linear(hidden, hidden, dtype=DTYPE),
            make_activation(activation),
            nn.Linear(hidden, out_dim, dtype=DTYPE),
        )

    @property
    def output_layer(self) -> nn.Linear:
        return self.layers[-1]

    def zero_output(self) -> 'DenseNet3':
        """Zero the output layer so the network maps everything to 0."""
        with torch.no_grad():
            self.output_layer.weight.zero_()
            self.output_layer.bias.zero_()
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise DomainError(f"Expected input width {self.in_dim}, got {x.shape[-1]}")
        return self.layers(x)


class GraphNets(nn.Module):
    """Edge function f_e and node function f_n of the interaction graph."""

    def __init__(self, hidden: int = HIDDEN_WIDTH, activation: str = 'tanh'):
        super().__init__()
        # f_e(sender, receiver, static friction) and f_n(node, aggregated edges)
        self.edge_fn = DenseNet3(2 * NODE_DIM + 1, EDGE_DIM, hidden, activation)
        self.node_fn = DenseNet3(NODE_DIM + EDGE_DIM, 6, hidden, activation)

    def zero_output(self) -> 'GraphNets':
        self.edge_fn.zero_output()
        self.node_fn.zero_output()
        return self

    def edge(self, sender: torch.Tensor, receiver: torch.Tensor, static: torch.Tensor) -> torch.Tensor:
        return self.edge_fn(torch.cat([sender, receiver, static.unsqueeze(-1)], dim=-1))

    def node(self, node: torch.Tensor, edges: torch.Tensor) -> torch.Tensor:
        return self.node_fn(torch.cat([node, edges], dim=-1))


class TacNet(nn.Module):
    """Contact force distribution from the effect edge toward the robot."""

    def __init__(self, hidden: int = HIDDEN_WIDTH, activation: str = 'tanh'):
        super().__init__()
        self.net = DenseNet3(EDGE_DIM + ACTION_ENCODING_DIM, 4, hidden, activation)

    def zero_output(self) -> 'TacNet':
        self.net.zero_output()
        return self

    def forward(self, effect_edge: torch.Tensor,
                action_encoding: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            effect_edge: (B, EDGE_DIM) features of the link -> robot edge
            action_encoding: (B, ACTION_ENCODING_DIM)

        Returns:
            Tuple (mean (B, 2) in N, diagonal variance (B, 2) in N^2)
        """
        out = self.net(torch.cat([effect_edge, action_encoding], dim=-1))
        return out[..., :2], positive_variance(out[..., 2:])


class ObsNoiseNet(nn.Module):
    """
    Heteroscedastic observation noise.

    The visual variance comes from a three-stage convolution and pooling stack
    over the 64x64 image, the tactile variance from a two-layer dense net over
    the measured force.
    """

    def __init__(self, activation: str = 'silu'):
        super().__init__()
        stages = []
        in_ch = 1
        for out_ch in CONV_CHANNELS:
            stages += [nn.Conv2d(in_ch, out_ch, 3, padding=1, dtype=DTYPE),
                       make_activation(activation), nn.MaxPool2d(2)]
            in_ch = out_ch
        self.visual = nn.Sequential(*stages, nn.Flatten())
        side = OBS_IMAGE_SIZE // 2 ** len(CONV_CHANNELS)
        self.visual_head = nn.Linear(in_ch * side * side, 1, dtype=DTYPE)
        self.tactile = nn.Sequential(
            nn.Linear(2, TACTILE_NOISE_HIDDEN, dtype=DTYPE),
            make_activation(activation),
            nn.Linear(TACTILE_NOISE_HIDDEN, 1, dtype=DTYPE),
        )
        with torch.no_grad():
            self.visual_head.bias.fill_(inverse_softplus(INITIAL_VISUAL_VAR - VARIANCE_FLOOR))
            self.tactile[-1].bias.fill_(inverse_softplus(INITIAL_TACTILE_VAR - VARIANCE_FLOOR))

    def forward(self, visual: torch.Tensor, tactile: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            visual: (B, 4096) or (4096,) intensities
            tactile: (B, 2) or (2,) forces

        Returns:
            Tuple (sigma_v^2 (B,), sigma_t^2 (B,))
        """
        visual = torch.as_tensor(visual, dtype=DTYPE)
        tactile = torch.as_tensor(tactile, dtype=DTYPE)
        if visual.shape[-1] != OBS_IMAGE_SIZE * OBS_IMAGE_SIZE or tactile.shape[-1] != 2:
            raise DomainError(f"Expected 4096 + 2 observation entries, got "
                              f"{visual.shape[-1]} + {tactile.shape[-1]}")
        visual = visual.reshape(-1, 1, OBS_IMAGE_SIZE, OBS_IMAGE_SIZE)
        tactile = tactile.reshape(-1, 2)
        var_v = positive_variance(self.visual_head(self.visual(visual))).squeeze(-1)
        var_t = positive_variance(self.tactile(tactile)).squeeze(-1)
        return var_v, var_t


def encode_action(direction: float, speed: float, link_poses: torch.Tensor,
                  robot_xy) -> torch.Tensor:
    """
    Action encoding in the frame of the touched link.

    Args:
        direction: Robot heading in the world (rad)
        speed: Robot speed (m/s)
        link_poses: (B, 3) poses of the touched link
        robot_xy: Robot position in the world (2,)

    Returns:
        (B, 5): robot position in the link frame, sin and cos of the heading
        relative to the link, speed
    """
    robot = torch.as_tensor(robot_xy, dtype=DTYPE).reshape(1, 2)
    theta = link_poses[:, 2]
    d = robot - link_poses[:, :2]
    c, s = torch.cos(theta), torch.sin(theta)
    local = torch.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], dim=-1)
    rel = direction - theta
    u = torch.full_like(theta, float(speed))
    return torch.cat([local, torch.sin(rel)[:, None], torch.cos(rel)[:, None], u[:, None]], dim=-1)

"""
Process models for the dual filter.

Each model maps sigma points [psi, phi] and the current robot action to the
next link states and a contact force distribution, and provides the
observation noise for a measured observation.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from ..config.constants import (
    ActionKind, DT, GRAVITY, ROBOT_FRICTION, ANALYTICAL_VISUAL_STD, ANALYTICAL_TACTILE_STD,
    ACTION_ENCODING_DIM
)
from .errors import ConfigError, DomainError
from .interaction_graph import belief_dim, build_graph, propagate
from .networks import DTYPE, DenseNet3, GraphNets, ObsNoiseNet, TacNet, encode_action, positive_variance
from .observation import VISUAL_SIZE
from .push_simulator import (
    ActionAffordance, RigidObjectModel, apply_planar_motion, rigid_push, step_object
)

logger = logging.getLogger(__name__)


@dataclass
class ProcessOutput:
    """Predicted link states (B, 6L), force mean and variance (B, 2), per-point validity (B,)."""
    psi: torch.Tensor
    force_mean: torch.Tensor
    force_var: torch.Tensor
    valid: torch.Tensor


def num_links_of(sigma: torch.Tensor) -> int:
    D = sigma.shape[-1]
    if (D + 1) % 11 != 0:
        raise DomainError(f"Sigma dimension {D} is not 11L-1")
    return (D + 1) // 11


class ProcessModel(nn.Module):
    """Common interface of the analytical and learned process models."""

    model_type = 'base'
    learned = True

    def __init__(self, interaction: ActionKind = ActionKind.PUSH, dt: float = DT):
        super().__init__()
        self.interaction = ActionKind(interaction)
        self.dt = dt

    def forward(self, sigma: torch.Tensor, action: ActionAffordance, robot_xy,
                obj: Optional[RigidObjectModel] = None) -> ProcessOutput:
        raise NotImplementedError

    def observation_noise(self, z) -> Tuple[torch.Tensor, torch.Tensor]:
        """Visual and tactile noise variances (scalars) for a flat 4098 observation."""
        z = torch.as_tensor(z, dtype=DTYPE).reshape(-1)
        var_v, var_t = self.obs_noise(z[:VISUAL_SIZE], z[VISUAL_SIZE:])
        return var_v[0], var_t[0]

    def config(self) -> dict:
        return {'model': self.model_type, 'interaction': self.interaction.value}


class AnalyticalProcessModel(ProcessModel):
    """
    Limit-surface simulator evaluated per sigma point.

    Not differentiable; noise levels are fixed.
    """

    model_type = 'analytical'
    learned = False

    def __init__(self, interaction: ActionKind = ActionKind.PUSH, dt: float = DT,
                 mu_r: float = ROBOT_FRICTION):
        super().__init__(interaction, dt)
        self.mu_r = mu_r

    def forward(self, sigma, action, robot_xy, obj=None) -> ProcessOutput:
        if obj is None:
            raise ConfigError("The analytical model needs the object geometry")
        x = torch.as_tensor(sigma, dtype=DTYPE).detach().cpu().numpy().reshape(-1, obj.belief_dim)
        B, L = len(x), obj.num_links
        psi = x[:, :6 * L].reshape(B, L, 6)
        phi = x[:, 6 * L:]
        new = psi.copy()
        force = np.zeros((B, 2))
        valid = np.ones(B, dtype=bool)

        if action.kind is ActionKind.PUSH and L == 1:
            link = obj.links[0]
            with np.errstate(all='ignore'):
                res = rigid_push(psi[:, 0, :3], link.shape, phi[:, 2:4], link.char_length,
                                 phi[:, 1] * phi[:, 0] * GRAVITY, robot_xy, action.velocity, self.mu_r)
                m = res.motion
                poses = apply_planar_motion(psi[:, 0, :3], m.pivot, m.velocity, m.omega, self.dt)
            new[:, 0, :3] = poses
            new[:, 0, 3:] = (poses - psi[:, 0, :3]) / self.dt
            force = res.force
        else:
            for b in range(B):
                try:
                    res = step_object(psi[b], obj.with_param_vector(phi[b]), action, self.dt, robot_xy)
                except DomainError as exc:
                    logger.debug(f"Sigma point {b} rejected by the simulator: {exc}")
                    valid[b] = False
                    continue
                new[b] = res.state
                force[b] = res.force

        valid &= np.isfinite(new).all(axis=(1, 2)) & np.isfinite(force).all(axis=1)
        new[~valid] = psi[~valid]
        force[~valid] = 0.0
        var = np.full((B, 2), ANALYTICAL_TACTILE_STD ** 2)
        return ProcessOutput(torch.from_numpy(new.reshape(B, 6 * L)), torch.from_numpy(force),
                             torch.from_numpy(var), torch.from_numpy(valid))

    def observation_noise(self, z) -> Tuple[torch.Tensor, torch.Tensor]:
        return (torch.tensor(ANALYTICAL_VISUAL_STD ** 2, dtype=DTYPE),
                torch.tensor(ANALYTICAL_TACTILE_STD ** 2, dtype=DTYPE))


class GraphProcessModel(ProcessModel):
    """Interaction-graph propagation with the force read from the effect edge."""

    model_type = 'graph'

    def __init__(self, interaction: ActionKind = ActionKind.PUSH, dt: float = DT,
                 activation: str = 'tanh'):
        super().__init__(interaction, dt)
        self.graph_nets = GraphNets(activation=activation)
        self.tacnet = TacNet(activation=activation)
        self.obs_noise = ObsNoiseNet()

    def forward(self, sigma, action, robot_xy, obj=None) -> ProcessOutput:
        sigma = torch.as_tensor(sigma, dtype=DTYPE)
        L = num_links_of(sigma)
        graph = build_graph(sigma, action.direction, action.speed, action.link, L, robot_xy)
        out = propagate(graph, self.graph_nets, self.dt)
        B = sigma.shape[0]
        psi = out.link_states().reshape(B, 6 * L)
        touched = sigma[:, 6 * action.link:6 * action.link + 3]
        mean, var = self.tacnet(out.effect_edge, encode_action(action.direction, action.speed,
                                                               touched, robot_xy))
        valid = torch.isfinite(psi).all(dim=1) & torch.isfinite(mean).all(dim=1)
        return ProcessOutput(psi, mean, var, valid)


class FeedForwardProcessModel(ProcessModel):
    """Flat dense baseline on [psi, phi, action encoding]; the link count is fixed at construction."""

    model_type = 'ff'

    def __init__(self, num_links: int = 1, interaction: ActionKind = ActionKind.PUSH,
                 dt: float = DT, activation: str = 'tanh'):
        super().__init__(interaction, dt)
        self.num_links = num_links
        self.net = DenseNet3(belief_dim(num_links) + ACTION_ENCODING_DIM, 6 * num_links + 4,
                             activation=activation)
        self.obs_noise = ObsNoiseNet()

    def config(self) -> dict:
        return {**super().config(), 'links': self.num_links}

    def forward(self, sigma, action, robot_xy, obj=None) -> ProcessOutput:
        sigma = torch.as_tensor(sigma, dtype=DTYPE)
        L = num_links_of(sigma)
        if L != self.num_links:
            raise DomainError(f"Feed-forward model was built for {self.num_links} links, got {L}")
        robot = torch.as_tensor(robot_xy, dtype=DTYPE).reshape(2)
        offset = torch.cat([robot, torch.zeros(4, dtype=DTYPE)]).repeat(L)
        rel = torch.cat([sigma[:, :6 * L] - offset, sigma[:, 6 * L:]], dim=1)
        touched = sigma[:, 6 * action.link:6 * action.link + 3]
        enc = encode_action(action.direction, action.speed, touched, robot)
        out = self.net(torch.cat([rel, enc], dim=1))
        psi = sigma[:, :6 * L] + out[:, :6 * L] * self.dt
        mean, var = out[:, 6 * L:6 * L + 2], positive_variance(out[:, 6 * L + 2:])
        valid = torch.isfinite(psi).all(dim=1) & torch.isfinite(mean).all(dim=1)
        return ProcessOutput(psi, mean, var, valid)

"""
Robot-object-support interaction graph and its causal two-pass propagation.

Nodes are the L links (indices 0..L-1), the robot (index L) and the support
(index L+1). Link and robot positions are expressed relative to the robot so
the graph is translation invariant.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import torch

from ..config.constants import DT, NODE_DIM, DEFAULT_ROBOT_MASS, ROBOT_FRICTION
from .errors import DomainError, StructuralError
from .networks import DTYPE, GraphNets

logger = logging.getLogger(__name__)


def belief_dim(L: int) -> int:
    return 11 * L - 1


def split_sigma(sigma: torch.Tensor, L: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """Split (B, 11L-1) points into psi (B, L, 6) and phi (B, 5L-1)."""
    return sigma[:, :6 * L].reshape(-1, L, 6), sigma[:, 6 * L:]


@dataclass
class InteractionGraph:
    """
    Batched graph over B sigma points sharing one topology.

    Edge features start empty and are filled by propagate with the computed
    causal and effect edges, keyed by (sender, receiver).
    """
    nodes: torch.Tensor
    senders: Tuple[int, ...]
    receivers: Tuple[int, ...]
    edge_static: torch.Tensor
    num_links: int
    contact_link: int
    robot_xy: torch.Tensor
    edges: Dict[Tuple[int, int], torch.Tensor] = field(default_factory=dict)
    cause_order: List[int] = field(default_factory=list)
    effect_order: List[int] = field(default_factory=list)

    @property
    def robot(self) -> int:
        return self.num_links

    @property
    def support(self) -> int:
        return self.num_links + 1

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.senders)

    @property
    def cause_visits(self) -> int:
        return len(self.cause_order)

    @property
    def effect_visits(self) -> int:
        return len(self.effect_order)

    def receivers_of(self, i: int) -> List[int]:
        return sorted({r for s, r in zip(self.senders, self.receivers) if s == i})

    def senders_of(self, i: int) -> List[int]:
        return sorted({s for s, r in zip(self.senders, self.receivers) if r == i})

    def static_of(self, sender: int, receiver: int) -> torch.Tensor:
        for e, (s, r) in enumerate(zip(self.senders, self.receivers)):
            if s == sender and r == receiver:
                return self.edge_static[:, e]
        raise StructuralError(f"No edge {sender} -> {receiver}")

    @property
    def effect_edge(self) -> torch.Tensor:
        """Features of the contacted link -> robot edge after propagation."""
        key = (self.contact_link, self.robot)
        if key not in self.edges:
            raise StructuralError("Effect edge toward the robot has not been computed")
        return self.edges[key]

    def link_states(self) -> torch.Tensor:
        """Dynamic link features mapped back to world poses and twists, (B, L, 6)."""
        dyn = self.nodes[:, :self.num_links, :6]
        return dyn + torch.cat([self.robot_xy, torch.zeros(4, dtype=dyn.dtype)])


def build_graph(sigma, direction: float, speed: float, contact_link: int, L: int,
                robot_xy, mu_r: float = ROBOT_FRICTION) -> InteractionGraph:
    """
    Populate an interaction graph from sigma points and an action.

    Args:
        sigma: (B, 11L-1) or (11L-1,) sigma points [psi, phi]
        direction: Robot heading (rad)
        speed: Robot speed (m/s)
        contact_link: Index of the link the robot touches
        L: Number of links
        robot_xy: Current robot position (2,)
        mu_r: Robot-object friction on the robot edges

    Returns:
        InteractionGraph with L+2 nodes and 3L edges
    """
    sigma = torch.as_tensor(sigma, dtype=DTYPE)
    if sigma.dim() == 1:
        sigma = sigma.unsqueeze(0)
    if sigma.shape[-1] != belief_dim(L):
        raise DomainError(f"Sigma points for {L} links need {belief_dim(L)} entries, got {sigma.shape[-1]}")
    if not 0 <= contact_link < L:
        raise DomainError(f"Contact link {contact_link} outside 0..{L - 1}")
    B = sigma.shape[0]
    robot_xy = torch.as_tensor(robot_xy, dtype=DTYPE).reshape(2)
    psi, phi = split_sigma(sigma, L)

    rel = psi - torch.cat([robot_xy, torch.zeros(4, dtype=DTYPE)])
    link_params = phi[:, :4 * L].reshape(B, L, 4)
    statics = torch.stack([link_params[..., 0], link_params[..., 2], link_params[..., 3]], dim=-1)
    links = torch.cat([rel, statics], dim=-1)

    robot = torch.zeros(B, 1, NODE_DIM, dtype=DTYPE)
    robot[:, 0, 3] = speed * math.cos(direction)
    robot[:, 0, 4] = speed * math.sin(direction)
    robot[:, 0, 6] = DEFAULT_ROBOT_MASS
    support = torch.zeros(B, 1, NODE_DIM, dtype=DTYPE)
    nodes = torch.cat([links, robot, support], dim=1)

    R, S = L, L + 1
    mu = torch.full((B,), float(mu_r), dtype=DTYPE)
    senders, receivers, static = [R, contact_link], [contact_link, R], [mu, mu]
    for l in range(L):
        senders.append(l)
        receivers.append(S)
        static.append(link_params[:, l, 1])
    if L == 2:
        j, k = contact_link, 1 - contact_link
        senders += [j, k]
        receivers += [k, j]
        static += [phi[:, 4 * L], phi[:, 4 * L]]
    return InteractionGraph(nodes, tuple(senders), tuple(receivers), torch.stack(static, dim=1),
                            L, contact_link, robot_xy)


def _check_structure(graph: InteractionGraph):
    if graph.num_nodes != graph.num_links + 2:
        raise StructuralError(f"Expected {graph.num_links + 2} nodes, got {graph.num_nodes}")
    if len(graph.senders) != len(graph.receivers) or graph.edge_static.shape[1] != len(graph.senders):
        raise StructuralError("Edge lists and static features disagree in length")
    robot_targets = [r for s, r in zip(graph.senders, graph.receivers) if s == graph.robot]
    if len(robot_targets) != 1 or robot_targets[0] >= graph.num_links:
        raise StructuralError("The robot must have an out-edge to exactly one link")


def propagate(graph: InteractionGraph, nets: GraphNets, dt: float = DT) -> InteractionGraph:
    """
    Cause pass from the robot, then effect pass back toward it.

    The cause pass walks a LIFO stack starting at the robot. Every node popped
    with unvisited receivers sends causal edges to them; each receiver gets its
    support edge added and a residual dynamic update. Nodes without new
    receivers are end nodes. The effect pass walks the nodes in reverse
    visiting order and updates each one from the effect edges of the senders
    already handled in this pass.

    Args:
        graph: Graph from build_graph
        nets: Edge and node functions
        dt: Time step scaling the residual updates

    Returns:
        New graph with updated nodes, computed edges and visiting orders
    """
    _check_structure(graph)
    L, R, S = graph.num_links, graph.robot, graph.support
    nodes = [graph.nodes[:, i] for i in range(graph.num_nodes)]
    edges: Dict[Tuple[int, int], torch.Tensor] = {}

    def residual(i: int, message: torch.Tensor) -> torch.Tensor:
        delta = nets.node(nodes[i], message) * dt
        return torch.cat([nodes[i][:, :6] + delta, nodes[i][:, 6:]], dim=-1)

    to_visit, visited, end_nodes, cause_order = [R], [], [], []
    while to_visit:
        i = to_visit.pop()
        cause_order.append(i)
        targets = [r for r in graph.receivers_of(i)
                   if r not in visited and r not in to_visit and r not in end_nodes and r not in cause_order]
        if not targets:
            end_nodes.append(i)
            continue
        visited.append(i)
        to_visit.extend(targets)
        snapshot = {r: nodes[r] for r in targets + [i, S]}
        for r in targets:
            e = nets.edge(snapshot[i], snapshot[r], graph.static_of(i, r))
            edges[(i, r)] = e
            if r == S:
                continue
            e_support = nets.edge(snapshot[S], snapshot[r], graph.static_of(r, S))
            nodes[r] = residual(r, e + e_support)

    unreached = [l for l in range(L) if l not in cause_order]
    if unreached:
        raise StructuralError(f"Links {unreached} are not reachable from the robot")

    effect_order, done = [], set()
    for i in reversed(cause_order):
        effect_order.append(i)
        sources = [s for s in graph.senders_of(i) if s in done]
        done.add(i)
        if not sources:
            continue
        total = 0.0
        for s in sources:
            e = nets.edge(nodes[s], nodes[i], graph.static_of(s, i))
            edges[(s, i)] = e
            total = total + e
        if i != S:
            nodes[i] = residual(i, total)

    return replace(graph, nodes=torch.stack(nodes, dim=1), edges=edges,
                   cause_order=cause_order, effect_order=effect_order)

"""Non-iterative plan exchange: radius broadcast, plan shift, leader relay.

All communication is synchronous and lock-step: plans written during the
broadcast phase of step k are read only at step k+1, so there is never a
same-step circular dependency between agents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphNotRooted, NonFiniteState, ScenarioError, StalePlan
from .graph import CommGraph, bfs_from_leader
from .models import BrunovskyDims
from .ocp import OcpSpec, rollout_states


@dataclass(frozen=True)
class PlanMessage:
    """One agent's broadcast nominal input plan from sampling instant ``stamp``."""

    sender: int
    stamp: int
    inputs: np.ndarray  # (H, d)
    terminal_error: np.ndarray  # (nd,)

    def __post_init__(self):
        if not np.all(np.isfinite(self.inputs)) or not np.all(
            np.isfinite(self.terminal_error)
        ):
            raise NonFiniteState("plan message carries non-finite values")


class MessageBoard:
    """Shared per-step mailbox; enforces strictly increasing stamps per sender."""

    def __init__(self):
        self._latest: dict[int, PlanMessage] = {}
        self.posts = 0

    def post(self, msg: PlanMessage) -> None:
        prev = self._latest.get(msg.sender)
        if prev is not None and msg.stamp <= prev.stamp:
            raise StalePlan(
                f"agent {msg.sender} re-posted stamp {msg.stamp} (have {prev.stamp})"
            )
        self._latest[msg.sender] = msg
        self.posts += 1

    def read(self, sender: int, now: int) -> PlanMessage:
        """Plan from the previous sampling instant; StalePlan if older."""
        msg = self._latest.get(sender)
        if msg is None or msg.stamp < now - 1:
            have = "none" if msg is None else str(msg.stamp)
            raise StalePlan(f"agent {sender}: need stamp {now - 1}, have {have}")
        return msg


def initial_broadcast(
    margin_radii: dict[int, float], g: CommGraph
) -> dict[int, dict[int, float]]:
    """One-time scalar radius exchange: tables[i][j] = r_j for j in N_i.

    Executed once; the number of scalar messages equals the number of
    directed edges of the follower graph.
    """
    tables: dict[int, dict[int, float]] = {}
    for i in range(g.n_followers):
        tables[i + 1] = {j + 1: margin_radii[j + 1] for j in g.neighbors(i)}
    return tables


def shift_plan(msg: PlanMessage, terminal_gain: np.ndarray) -> np.ndarray:
    """Predicted inputs for the current instant from last instant's plan.

    Drops the already-applied first element and appends the sender's
    terminal law applied to its broadcast terminal error.
    """
    tail = -terminal_gain @ msg.terminal_error
    return np.vstack([msg.inputs[1:], tail])


def rollout_neighbor(
    spec: OcpSpec,
    x_now: np.ndarray,
    v_hat: np.ndarray,
    ff_seq: np.ndarray,
) -> np.ndarray:
    """Predicted nominal states of a neighbor from its measured state.

    The neighbor's own nonlinearity is cancelled by its feedforward, so the
    nominal rollout is the bare chain driven by the predicted inputs plus
    the leader feedforward samples.
    """
    states = rollout_states(spec, x_now, ff_seq, v_hat)
    if not np.all(np.isfinite(states)):
        raise NonFiniteState("neighbor rollout produced non-finite states")
    return states


@dataclass(frozen=True)
class LeaderEstimate:
    """One agent's propagated leader state estimate."""

    holder: int
    hops: int
    value: np.ndarray
    age: int  # sampling steps since the source measurement


def relay_parents(g: CommGraph) -> tuple[list[int | None], list[int]]:
    """BFS relay tree (lowest-index tie-breaking); raises if not rooted."""
    parent, depth = bfs_from_leader(g)
    if any(d < 0 for d in depth):
        raise GraphNotRooted("no spanning tree rooted at the leader")
    return parent, depth


def relay_leader(
    g: CommGraph,
    leader_state: np.ndarray,
    previous: dict[int, LeaderEstimate] | None,
) -> dict[int, LeaderEstimate]:
    """One synchronous relay round.

    Pinned agents copy the exact current leader state. Every other agent
    receives the estimate its BFS parent held at the previous step (one
    sampling step of delay per hop). With ``previous`` None (deployment
    time), all agents are initialized with the true leader state.
    """
    parent, depth = relay_parents(g)
    estimates: dict[int, LeaderEstimate] = {}
    for i in range(g.n_followers):
        if depth[i] == 0:
            estimates[i + 1] = LeaderEstimate(
                holder=i + 1, hops=0, value=leader_state.copy(), age=0
            )
        elif previous is None:
            estimates[i + 1] = LeaderEstimate(
                holder=i + 1, hops=depth[i], value=leader_state.copy(), age=0
            )
        else:
            src = previous[parent[i] + 1]
            estimates[i + 1] = LeaderEstimate(
                holder=i + 1, hops=depth[i], value=src.value.copy(), age=src.age + 1
            )
    return estimates

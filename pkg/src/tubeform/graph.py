"""Communication topology, leader rooting, and the global formation-error bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphNotRooted, MissingNeighborState, ScenarioError
from .linalg import eig_sym
from .models import FormationSpec


@dataclass(frozen=True)
class CommGraph:
    """Weighted follower digraph with leader pinning weights.

    adjacency[i, j] = a_ij > 0 iff agent i listens to agent j (edge j -> i),
    using 0-based follower indices. b0[i] > 0 iff agent i is pinned to the
    leader. nu1, nu2 are the coupling scalars of the synchronization error.
    """

    adjacency: np.ndarray
    b0: np.ndarray
    nu1: float = 1.0
    nu2: float = 1.0

    def __post_init__(self):
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ScenarioError("adjacency must be square")
        if np.any(np.diag(a) != 0.0):
            raise ScenarioError("adjacency must have a zero diagonal")
        if np.any(a < 0.0) or np.any(self.b0 < 0.0):
            raise ScenarioError("graph weights must be nonnegative")
        if self.b0.shape != (a.shape[0],):
            raise ScenarioError("b0 length must match follower count")
        if self.nu1 <= 0.0 or self.nu2 <= 0.0:
            raise ScenarioError("nu1 and nu2 must be positive")

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.n_followers) if self.adjacency[i, j] > 0.0]

    def degree(self, i: int) -> float:
        return float(np.sum(self.adjacency[i]))

    def laplacian(self) -> np.ndarray:
        return np.diag(np.sum(self.adjacency, axis=1)) - self.adjacency

    def augmented(self) -> np.ndarray:
        """M = nu1 * L + nu2 * B0."""
        return self.nu1 * self.laplacian() + self.nu2 * np.diag(self.b0)

    def coupling(self, i: int) -> float:
        """nu1 * d_i + nu2 * b_i0, the gain on agent i's own input in e^i."""
        return self.nu1 * self.degree(i) + self.nu2 * float(self.b0[i])


def bfs_from_leader(g: CommGraph) -> tuple[list[int | None], list[int]]:
    """BFS over the augmented digraph from the leader.

    Returns (parent, depth) per follower, parent -1 meaning the leader,
    None/-(1) depth meaning unreachable. Ties break toward the lowest index.
    """
    n = g.n_followers
    parent: list[int | None] = [None] * n
    depth = [-1] * n
    queue: list[int] = []
    for i in range(n):
        if g.b0[i] > 0.0:
            parent[i] = -1
            depth[i] = 0
            queue.append(i)
    head = 0
    while head < len(queue):
        j = queue[head]
        head += 1
        for i in range(n):
            if g.adjacency[i, j] > 0.0 and depth[i] < 0:
                parent[i] = j
                depth[i] = depth[j] + 1
                queue.append(i)
    return parent, depth


def has_leader_spanning_tree(g: CommGraph) -> bool:
    """True iff every follower is reachable from the leader node."""
    _, depth = bfs_from_leader(g)
    return all(d >= 0 for d in depth)


def min_singular_value(m: np.ndarray) -> float:
    """Smallest singular value via eig_sym of M^T M, clamped at zero."""
    w, _ = eig_sym(m.T @ m)
    return float(np.sqrt(max(0.0, w[0])))


def sync_error(
    i: int,
    states: dict[int, np.ndarray],
    g: CommGraph,
    formation: FormationSpec,
    order: int,
) -> np.ndarray:
    """Local synchronization error e^i_p from neighbor and leader states.

    ``states`` maps agent ids (0 = leader, 1..N = followers) to order-p
    state blocks. The leader entry may be absent when b_i0 = 0.
    """
    if i + 1 not in states:
        raise MissingNeighborState(f"state of agent {i + 1} missing")
    own = states[i + 1] - formation.offset(i + 1, order)
    err = np.zeros_like(own)
    for j in g.neighbors(i):
        if j + 1 not in states:
            raise MissingNeighborState(f"state of neighbor {j + 1} missing")
        other = states[j + 1] - formation.offset(j + 1, order)
        err -= g.nu1 * g.adjacency[i, j] * (own - other)
    if g.b0[i] > 0.0:
        if 0 not in states:
            raise MissingNeighborState("leader state missing for a pinned agent")
        leader = states[0] - formation.offset(0, order)
        err -= g.nu2 * g.b0[i] * (own - leader)
    return err


def sync_error_stacked(
    states: np.ndarray, g: CommGraph, formation: FormationSpec, order: int
) -> np.ndarray:
    """All followers' e^i_p at once from an (N+1, d) state-block array."""
    table = {idx: states[idx] for idx in range(states.shape[0])}
    return np.stack(
        [sync_error(i, table, g, formation, order) for i in range(g.n_followers)]
    )


def zbar(i: int, radii: dict[int, float], r0: float, g: CommGraph) -> float:
    """Lemma-style deviation bound on e^i_p - ebar^i_p from local radii.

    ``radii`` maps follower ids (1..N) to ball-norm deviation radii; ``r0``
    is the leader's ball radius.
    """
    out = g.coupling(i) * radii[i + 1]
    for j in g.neighbors(i):
        out += g.nu1 * g.adjacency[i, j] * radii[j + 1]
    out += g.nu2 * float(g.b0[i]) * r0
    return out


@dataclass(frozen=True)
class GlobalBoundCertificate:
    """Minimum singular value of the augmented Laplacian and the error bound."""

    m: np.ndarray
    sv_min: float
    zbars: np.ndarray
    bound: float


def global_bound(g: CommGraph, zbars: np.ndarray) -> GlobalBoundCertificate:
    """Assemble the steady-state stacked formation-error bound."""
    if not has_leader_spanning_tree(g):
        raise GraphNotRooted("no spanning tree rooted at the leader")
    m = g.augmented()
    sv = min_singular_value(m)
    bound = float(np.linalg.norm(zbars) / sv)
    return GlobalBoundCertificate(m=m, sv_min=sv, zbars=np.asarray(zbars, float), bound=bound)

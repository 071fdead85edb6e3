"""Communication topology of one leader and N followers.

Agent 0 is the leader; followers are 1..N.  Entry ``adjacency[i, j] == 1``
means agent i receives information from agent j, so information flows
along j -> i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    IndexOutOfRangeError,
    NonBinaryEntryError,
    NonSquareError,
    SelfLoopError,
)


@dataclass(frozen=True)
class DirectedGraph:
    adjacency: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "adjacency", np.asarray(self.adjacency, dtype=int))
        self.adjacency.setflags(write=False)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_followers(self) -> int:
        return self.n_agents - 1

    def edges(self) -> list[tuple[int, int]]:
        """Ordered pairs (i, j) with i receiving from j."""
        rows, cols = np.nonzero(self.adjacency)
        return list(zip(rows.tolist(), cols.tolist()))

    def follower_edges(self) -> list[tuple[int, int]]:
        """Edges whose receiving end is a follower (these carry gains)."""
        return [(i, j) for (i, j) in self.edges() if i > 0]


def build_graph(adjacency) -> DirectedGraph:
    """Validate a 0/1 adjacency matrix and wrap it.

    Raises NonSquareError, SelfLoopError or NonBinaryEntryError on bad input.
    """
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise NonSquareError(f"adjacency must be square, got shape {adj.shape}")
    if not np.isin(adj, (0, 1)).all():
        raise NonBinaryEntryError("adjacency entries must be exactly 0 or 1")
    if np.any(np.diag(adj) != 0):
        raise SelfLoopError("self-loops (nonzero diagonal) are not allowed")
    return DirectedGraph(adj.astype(int))


def neighbors(g: DirectedGraph, i: int) -> set[int]:
    """Agents j != i that agent i receives from."""
    if not 0 <= i < g.n_agents:
        raise IndexOutOfRangeError(f"agent index {i} out of range 0..{g.n_agents - 1}")
    return {int(j) for j in np.nonzero(g.adjacency[i])[0]}


def has_spanning_tree(g: DirectedGraph) -> bool:
    """True iff some root reaches every node along information flow.

    Information flows j -> i whenever adjacency[i, j] = 1, so from a root r
    we traverse to every i with adjacency[i, r] = 1, and so on.  Offered as
    a diagnostic; the design machinery does not require it.
    """
    n = g.n_agents
    for root in range(n):
        seen = {root}
        frontier = [root]
        while frontier:
            j = frontier.pop()
            for i in np.nonzero(g.adjacency[:, j])[0]:
                if int(i) not in seen:
                    seen.add(int(i))
                    frontier.append(int(i))
        if len(seen) == n:
            return True
    return False


def example1_graph() -> DirectedGraph:
    """Benchmark topology: leader -> 1, 1 -> 2, 1 -> 3."""
    adj = np.zeros((4, 4), dtype=int)
    adj[1, 0] = 1
    adj[2, 1] = 1
    adj[3, 1] = 1
    return build_graph(adj)

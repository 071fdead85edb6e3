"""Dynamic periodic event-triggering law.

Every h steps each agent computes a threshold signal rho from the latest
broadcast values, decides whether to broadcast via eta + theta * rho < 0,
and then updates its internal variable eta <- (1 - lambda) eta + rho.  The
update always uses the rho computed before any broadcast reset.  Time 0
counts as a broadcast instant for every agent so all held errors start at
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UninitializedBroadcastError
from .graph import DirectedGraph, neighbors


@dataclass
class EtsParams:
    """Trigger parameters; index 0 is the leader.

    sigma_0 weighs the leader's broadcast-state term; sigma[(i, j)] > 0
    exactly on graph edges.  Validity requires 1 - lambda_i - 1/theta_i >= 0
    for every agent, which keeps eta nonnegative along any run.
    """

    graph: DirectedGraph
    sigma_0: float
    sigma: dict[tuple[int, int], float]
    theta: list[float]
    lam: list[float]
    omega: list[np.ndarray]
    h: int = 1
    eta_0: list[float] | None = None

    def __post_init__(self):
        self.omega = [np.atleast_2d(np.asarray(W, dtype=float)) for W in self.omega]
        if self.eta_0 is None:
            self.eta_0 = [0.0] * self.graph.n_agents


def validate_params(p: EtsParams) -> list[str]:
    """Return a list of violations (empty means valid); never raises."""
    out = []
    n_agents = p.graph.n_agents
    if not (len(p.theta) == len(p.lam) == len(p.omega) == len(p.eta_0) == n_agents):
        out.append("parameter lists must have one entry per agent")
        return out
    if p.h < 1:
        out.append(f"h must be a positive integer step count, got {p.h}")
    if p.sigma_0 <= 0:
        out.append(f"sigma_0 must be positive, got {p.sigma_0}")
    for i in range(n_agents):
        th, la = p.theta[i], p.lam[i]
        if th <= 0:
            out.append(f"agent {i}: theta must be positive, got {th}")
        if la <= 0:
            out.append(f"agent {i}: lambda must be positive, got {la}")
        if th > 0 and la > 0 and 1.0 - la - 1.0 / th < 0:
            out.append(f"agent {i}: 1 - lambda - 1/theta = {1.0 - la - 1.0 / th:.4g} < 0")
        if p.eta_0[i] < 0:
            out.append(f"agent {i}: eta(0) must be nonnegative")
        W = p.omega[i]
        if not np.allclose(W, W.T, atol=1e-10):
            out.append(f"agent {i}: Omega not symmetric")
        elif np.linalg.eigvalsh(0.5 * (W + W.T)).min() <= 0:
            out.append(f"agent {i}: Omega not positive definite")
    edges = set(p.graph.follower_edges())
    for (i, j), s in p.sigma.items():
        if (i, j) not in edges:
            out.append(f"sigma[{i},{j}] set but ({i},{j}) is not a graph edge")
        elif s <= 0:
            out.append(f"sigma[{i},{j}] must be positive on an edge, got {s}")
    for e in edges - set(p.sigma):
        out.append(f"edge {e} has no sigma weight")
    return out


@dataclass
class EtsState:
    """Per-agent trigger state carried between sampling instants."""

    eta: float
    last_broadcast_state: np.ndarray | None = None
    last_broadcast_time: int = -1
    broadcast_count: int = 0  # includes the time-0 initialization

    def broadcast(self, x: np.ndarray, t: int):
        self.last_broadcast_state = np.array(x, dtype=float)
        self.last_broadcast_time = t
        self.broadcast_count += 1


def compute_rho(i: int, current_sample: np.ndarray, own_last_broadcast: np.ndarray,
                neighbor_last_broadcasts: dict[int, np.ndarray], p: EtsParams) -> float:
    """Threshold signal at a sampling instant.

    Leader: sigma_0 xhat_0' Omega_0 xhat_0 - e_0' Omega_0 e_0.
    Follower i: sum_{j in N(i)} sigma_ij e_ij' Omega_i e_ij - e_i' Omega_i e_i
    with e_ij = xhat_i - xhat_j over the latest broadcasts.
    """
    if own_last_broadcast is None:
        raise UninitializedBroadcastError(f"agent {i} has no broadcast yet")
    W = p.omega[i]
    e_self = np.asarray(current_sample, dtype=float) - own_last_broadcast
    decay = float(e_self @ W @ e_self)
    if i == 0:
        gain = p.sigma_0 * float(own_last_broadcast @ W @ own_last_broadcast)
        return gain - decay
    gain = 0.0
    for j in neighbors(p.graph, i):
        if j not in neighbor_last_broadcasts or neighbor_last_broadcasts[j] is None:
            raise UninitializedBroadcastError(f"agent {i}: neighbor {j} has no broadcast")
        e_ij = own_last_broadcast - neighbor_last_broadcasts[j]
        gain += p.sigma[(i, j)] * float(e_ij @ W @ e_ij)
    return gain - decay


def update_eta(eta: float, rho: float, lam: float) -> float:
    """eta(tau_{v+1}) = (1 - lambda) eta(tau_v) + rho(tau_v)."""
    return (1.0 - lam) * eta + rho


def check_trigger(eta: float, rho: float, theta: float) -> bool:
    """Broadcast now iff eta + theta * rho < 0."""
    return eta + theta * rho < 0.0

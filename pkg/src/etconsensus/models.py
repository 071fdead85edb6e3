"""Agent dynamics, exact discretization, and lifted block matrices.

The lifted error state stacks the follower-leader errors first and the
leader state last:

    eps(t) = [x_1 - x_0, ..., x_N - x_0, x_0]

so lifted block index b maps to agent b+1 for b < N and to the leader for
b = N.  All lifted matrices below follow that ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import (
    DimensionMismatchError,
    ExtraGainError,
    MissingGainError,
    NonFiniteError,
)
from .graph import DirectedGraph, neighbors


def block_index(agent: int, n_followers: int) -> int:
    """Lifted block index for an agent id (leader 0 goes last)."""
    return n_followers if agent == 0 else agent - 1


@dataclass(frozen=True)
class AgentModel:
    """Discrete-time agent x(t+1) = A x(t) + B u(t) (+ D w, + B_d d)."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray | None = None      # noise channel used during collection
    B_d: np.ndarray | None = None    # disturbance channel of the closed loop

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatchError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatchError(f"B rows {B.shape[0]} != n {A.shape[0]}")
        for name in ("D", "B_d"):
            M = getattr(self, name)
            if M is not None:
                M = np.atleast_2d(np.asarray(M, dtype=float))
                object.__setattr__(self, name, M)
                if M.shape[0] != A.shape[0]:
                    raise DimensionMismatchError(f"{name} rows != n")
                if np.linalg.matrix_rank(M, tol=1e-10) < M.shape[1]:
                    raise DimensionMismatchError(f"{name} must have full column rank")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Dims:
    N: int       # number of followers
    n: int       # state dimension per agent
    m: int       # input dimension per agent
    n_w: int     # noise channel width per agent
    n_d: int     # disturbance channel width per agent

    @property
    def nbar(self) -> int:
        return (self.N + 1) * self.n

    @property
    def mbar(self) -> int:
        return (self.N + 1) * self.m

    @property
    def wbar(self) -> int:
        return (self.N + 1) * self.n_w

    @property
    def dbar(self) -> int:
        return (self.N + 1) * self.n_d


@dataclass(frozen=True)
class LiftedSystem:
    """Block matrices of the stacked error dynamics."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    B_d: np.ndarray
    dims: Dims


@dataclass(frozen=True)
class BlockGain:
    """Lifted controller matrix plus the per-pair gains it was built from.

    K acts on the sampled lifted error: u = K eps(t_k).  Follower row i has
    sum_{j in N(i)} K_ij on the diagonal and -K_ij at block (i, j) for
    follower neighbors; a leader edge (i, 0) contributes K_i0 only to the
    diagonal because e_i0 = eps_i(t_k) directly.  The leader row is zero
    except for K_0 in the last block.
    """

    K: np.ndarray
    K_0: np.ndarray
    pair_gains: dict[tuple[int, int], np.ndarray]


def discretize(A_cont, B_cont, T_k: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization over a step of T_k seconds.

    A = expm(A_cont T_k); B is read off the top-right block of
    expm([[A_cont, B_cont], [0, 0]] T_k), which equals the input integral.
    """
    A_cont = np.atleast_2d(np.asarray(A_cont, dtype=float))
    B_cont = np.atleast_2d(np.asarray(B_cont, dtype=float))
    if not (np.isfinite(A_cont).all() and np.isfinite(B_cont).all()):
        raise NonFiniteError("continuous-time matrices contain non-finite entries")
    if T_k <= 0:
        raise ValueError("T_k must be positive")
    n, m = A_cont.shape[0], B_cont.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A_cont
    aug[:n, n:] = B_cont
    M = expm(aug * T_k)
    return M[:n, :n], M[:n, n:]


def msd_matrices(f: float, phi: float, varphi: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time mass-spring-damper benchmark agent.

    A = [[0, 1], [-f/phi, -varphi/phi]], B = [[0], [1/phi]]; the benchmark
    uses triples (f, phi, varphi) = (1, 1, 2), (1, 1.1, 2), (1, 1.2, 2),
    (1, 0.8, 2) for leader and followers 1-3.
    """
    A = np.array([[0.0, 1.0], [-f / phi, -varphi / phi]])
    B = np.array([[0.0], [1.0 / phi]])
    return A, B


def _check_shared_dims(models: list[AgentModel]) -> tuple[int, int]:
    n, m = models[0].n, models[0].m
    for k, mod in enumerate(models):
        if mod.n != n or mod.m != m:
            raise DimensionMismatchError(f"agent {k} has (n, m)=({mod.n}, {mod.m}), expected ({n}, {m})")
    return n, m


def _lift_channel(mats: list[np.ndarray], N: int) -> np.ndarray:
    """Lift per-agent channel matrices M_i to the error ordering.

    Result: [blockdiag(M_1..M_N), column of -M_0; 0, M_0].
    """
    n = mats[0].shape[0]
    w = mats[0].shape[1]
    out = np.zeros(((N + 1) * n, (N + 1) * w))
    for i in range(1, N + 1):
        b = i - 1
        out[b * n:(b + 1) * n, b * w:(b + 1) * w] = mats[i]
        out[b * n:(b + 1) * n, N * w:] = -mats[0]
    out[N * n:, N * w:] = mats[0]
    return out


def lift_error_system(models: list[AgentModel], graph: DirectedGraph) -> LiftedSystem:
    """Assemble the stacked error-system block matrices.

    models[0] is the leader.  A gets blockdiag(A_1..A_N) up left, the
    stacked (A_i - A_0) in the last block column, A_0 in the corner and a
    zero lower-left block; B, D, B_d follow the signed analogue with -B_0
    stacked in the last column.
    """
    if len(models) != graph.n_agents:
        raise DimensionMismatchError(
            f"{len(models)} models for a {graph.n_agents}-agent graph")
    N = graph.n_followers
    n, m = _check_shared_dims(models)

    A = np.zeros(((N + 1) * n, (N + 1) * n))
    for i in range(1, N + 1):
        b = i - 1
        A[b * n:(b + 1) * n, b * n:(b + 1) * n] = models[i].A
        A[b * n:(b + 1) * n, N * n:] = models[i].A - models[0].A
    A[N * n:, N * n:] = models[0].A

    B = _lift_channel([mod.B for mod in models], N)

    D_list = [mod.D if mod.D is not None else np.eye(n) for mod in models]
    n_w = D_list[0].shape[1]
    if any(D.shape[1] != n_w for D in D_list):
        raise DimensionMismatchError("noise channels must share a width")
    D = _lift_channel(D_list, N)

    Bd_list = [mod.B_d if mod.B_d is not None else D_list[k] for k, mod in enumerate(models)]
    n_d = Bd_list[0].shape[1]
    if any(Bd.shape[1] != n_d for Bd in Bd_list):
        raise DimensionMismatchError("disturbance channels must share a width")
    B_d = _lift_channel(Bd_list, N)

    dims = Dims(N=N, n=n, m=m, n_w=n_w, n_d=n_d)
    return LiftedSystem(A=A, B=B, D=D, B_d=B_d, dims=dims)


def lift_controller(K_0, pair_gains: dict[tuple[int, int], np.ndarray],
                    graph: DirectedGraph) -> BlockGain:
    """Build the lifted gain matrix from per-pair gains.

    pair_gains keys must be exactly the graph's follower edges (i, j),
    meaning follower i uses e_ij; (i, 0) denotes a leader edge.
    """
    K_0 = np.atleast_2d(np.asarray(K_0, dtype=float))
    m, n = K_0.shape
    N = graph.n_followers
    edges = set(graph.follower_edges())
    given = {(int(i), int(j)): np.atleast_2d(np.asarray(K, dtype=float))
             for (i, j), K in pair_gains.items()}
    missing = edges - set(given)
    extra = set(given) - edges
    if missing:
        raise MissingGainError(f"edges without gains: {sorted(missing)}")
    if extra:
        raise ExtraGainError(f"gains without edges: {sorted(extra)}")
    for (i, j), K in given.items():
        if K.shape != (m, n):
            raise DimensionMismatchError(f"gain ({i},{j}) has shape {K.shape}, expected {(m, n)}")

    K_big = np.zeros(((N + 1) * m, (N + 1) * n))
    for (i, j), K in given.items():
        bi = block_index(i, N)
        K_big[bi * m:(bi + 1) * m, bi * n:(bi + 1) * n] += K
        if j != 0:
            bj = block_index(j, N)
            K_big[bi * m:(bi + 1) * m, bj * n:(bj + 1) * n] = -K
    K_big[N * m:, N * n:] = K_0
    return BlockGain(K=K_big, K_0=K_0, pair_gains=given)


def split_gain(K: np.ndarray, graph: DirectedGraph, m: int, n: int) -> BlockGain:
    """Recover per-pair gains from a lifted gain with the expected pattern."""
    N = graph.n_followers
    K_0 = K[N * m:, N * n:].copy()
    pair_gains: dict[tuple[int, int], np.ndarray] = {}
    for i in range(1, N + 1):
        bi = block_index(i, N)
        row = K[bi * m:(bi + 1) * m]
        acc = np.zeros((m, n))
        for j in sorted(neighbors(graph, i)):
            if j == 0:
                continue
            bj = block_index(j, N)
            Kij = -row[:, bj * n:(bj + 1) * n]
            pair_gains[(i, j)] = Kij
            acc += Kij
        if 0 in neighbors(graph, i):
            pair_gains[(i, 0)] = row[:, bi * n:(bi + 1) * n] - acc
    return lift_controller(K_0, pair_gains, graph)

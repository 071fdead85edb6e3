"""Reusable pieces of the feasibility conditions.

Everything is expressed on the stacked instant vector

    xi(t) = [eps(t); eps(t+1); eps(tau_v); eps(tau_{v+1}); eps(t_k)]

through block-row selectors H_1..H_5.  The trigger weight matrices are
assembled directly from the quadratic forms they encode: with broadcast
coordinates epshat = [epshat_1 .. epshat_N, xhat_0], a follower pair edge
(i, j) reads e_ij = (E_i - E_j) epshat, a leader edge reads e_i0 = E_i
epshat, and the sample-vs-broadcast error of follower i reads
(E_i + E_L)(eps(tau_v) - eps(t_k)) with E_L the leader block selector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SigmaPatternMismatchError
from ..graph import DirectedGraph, neighbors
from ..models import block_index
from .expr import AffineMatrixExpr, partition_selectors, selector


@dataclass(frozen=True)
class SelectorSet:
    """H_1..H_5 block-row selectors of the xi vector (each nbar x 5 nbar)."""

    nbar: int
    H: tuple[np.ndarray, ...]

    @property
    def xi_dim(self) -> int:
        return 5 * self.nbar


def make_selectors(nbar: int) -> SelectorSet:
    return SelectorSet(nbar=nbar, H=tuple(partition_selectors([nbar] * 5)))


def agent_block_selectors(N: int, n: int) -> list[np.ndarray]:
    """Per-agent n x (N+1)n block selectors in lifted order (leader last)."""
    return partition_selectors([n] * (N + 1))


def pair_column_maps(graph: DirectedGraph, n: int) -> dict[tuple[int, int], np.ndarray]:
    """Maps C_ij with e_ij = C_ij epshat for each follower edge."""
    N = graph.n_followers
    E = agent_block_selectors(N, n)
    out = {}
    for (i, j) in graph.follower_edges():
        bi = block_index(i, N)
        if j == 0:
            out[(i, j)] = E[bi].copy()
        else:
            out[(i, j)] = E[bi] - E[block_index(j, N)]
    return out


def check_sigma_pattern(graph: DirectedGraph, sigma: dict[tuple[int, int], float]):
    edges = set(graph.follower_edges())
    given = {k for k, v in sigma.items() if v != 0.0}
    if given != edges:
        raise SigmaPatternMismatchError(
            f"sigma support {sorted(given)} != graph edges {sorted(edges)}")
    if any(v < 0 for v in sigma.values()):
        raise SigmaPatternMismatchError("sigma weights must be nonnegative")


def build_xi_blocks(nbar: int) -> tuple[AffineMatrixExpr, AffineMatrixExpr, AffineMatrixExpr]:
    """Xi_0, Xi_1, Xi_2 affine in P, R1, R2, S, M1, M2 over the xi space."""
    sel = make_selectors(nbar)
    H1, H2, H3, H4, _ = sel.H
    d = sel.xi_dim
    J = np.vstack([H3, H4])            # [H3; H4], S lives on 2 nbar
    dH = H2 - H1
    I5 = np.eye(d)

    xi0 = AffineMatrixExpr(d)
    xi0.add_term("M1", I5, H1 - H3, sym=True)
    xi0.add_term("M2", I5, H4 - H1, sym=True)
    xi0.add_term("P", H2.T, H2)
    xi0.add_term("P", -H1.T, H1)
    xi0.add_term("R2", dH.T, dH)
    xi0.add_term("R1", -dH.T, dH)
    xi0.add_term("S", -J.T, J)

    xi1 = AffineMatrixExpr(d)
    xi1.add_term("R2", dH.T, dH)
    xi1.add_term("S", -J.T, J)

    xi2 = AffineMatrixExpr(d)
    xi2.add_term("R1", dH.T, dH)
    xi2.add_term("S", J.T, J)
    return xi0, xi1, xi2


def omega_weight_exprs(graph: DirectedGraph, n: int, sigma_0: float,
                       sigma: dict[tuple[int, int], float],
                       prefix: str = "Omega") -> tuple[AffineMatrixExpr, AffineMatrixExpr]:
    """Broadcast-gain and error-decay weights, affine in per-agent Omegas.

    Omega_a encodes sigma_0 xhat_0' W_0 xhat_0 + sum sigma_ij e_ij' W_i e_ij;
    Omega_b encodes sum_i e_i' W_i e_i.  The leader corner of Omega_a
    carries sigma_0 W_0, consistent with the threshold-signal sum it bounds.
    """
    check_sigma_pattern(graph, sigma)
    N = graph.n_followers
    nbar = (N + 1) * n
    E = agent_block_selectors(N, n)
    E_L = E[N]
    C = pair_column_maps(graph, n)

    omega_a = AffineMatrixExpr(nbar)
    omega_a.add_term(f"{prefix}0", sigma_0 * E_L.T, E_L)
    for (i, j), Cij in C.items():
        omega_a.add_term(f"{prefix}{i}", sigma[(i, j)] * Cij.T, Cij)

    omega_b = AffineMatrixExpr(nbar)
    omega_b.add_term(f"{prefix}0", E_L.T, E_L)
    for i in range(1, N + 1):
        Ci = E[block_index(i, N)] + E_L
        omega_b.add_term(f"{prefix}{i}", Ci.T, Ci)
    return omega_a, omega_b


def build_trigger_block(graph: DirectedGraph, n: int, sigma_0: float,
                        sigma: dict[tuple[int, int], float],
                        prefix: str = "Omega") -> AffineMatrixExpr:
    """Q = H5' Omega_a H5 - (H3 - H5)' Omega_b (H3 - H5) on the xi space."""
    N = graph.n_followers
    nbar = (N + 1) * n
    sel = make_selectors(nbar)
    _, _, H3, _, H5 = sel.H
    omega_a, omega_b = omega_weight_exprs(graph, n, sigma_0, sigma, prefix)
    return omega_a.congruence(H5) - omega_b.congruence(H3 - H5)


def assemble_omega_ab(graph: DirectedGraph, omegas: list[np.ndarray], sigma_0: float,
                      sigma: dict[tuple[int, int], float]) -> tuple[np.ndarray, np.ndarray]:
    """Numeric Omega_a, Omega_b for given per-agent weight matrices."""
    n = np.atleast_2d(omegas[0]).shape[0]
    ea, eb = omega_weight_exprs(graph, n, sigma_0, sigma)
    assign = {f"Omega{i}": omegas[i] for i in range(len(omegas))}
    return ea.evaluate(assign), eb.evaluate(assign)

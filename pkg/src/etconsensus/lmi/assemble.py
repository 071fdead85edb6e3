"""Feasibility-problem assembly for analysis and co-design.

Conventions shared by all four assemblies:

* decision matrices P, R1, R2 live on the lifted error space, S on two
  copies of it, M1/M2/F on xi x lifted;
* the co-design transform eps = G z uses one shared invertible n x n block
  for every agent.  A shared block is what makes the recovered pair gains
  K_ij = Y_ij G^{-1} and trigger weights W_i = G^{-T} Wbar_i G^{-1} exact:
  with distinct per-agent blocks the transformed error-decay weight no
  longer decomposes into per-agent matrices, and the recovered controller
  row sums stop matching implementable pair gains;
* K_c is parameterized per edge as K_c = sum_over_edges R_i^T Y_ij C_ij,
  which carries the sparsity pattern of the lifted gain structurally;
* the data-consistency blocks enter through V_1 = [I 0], V_2 = [0 D] with
  D = (H1 + eps_D H2)^T, and the multiplier scalars q_t stay free design
  variables unless the multiplier was fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import ThetaAB
from ..errors import (
    DegenerateDataError,
    DimensionMismatchError,
    LambdaThetaViolationError,
    MissingStageOneError,
    NonPositiveGammaError,
)
from ..graph import DirectedGraph
from ..models import BlockGain, Dims, LiftedSystem, block_index
from .blocks import (
    agent_block_selectors,
    build_trigger_block,
    build_xi_blocks,
    make_selectors,
    pair_column_maps,
)
from .expr import AffineMatrixExpr, LmiProblem, RectExpr, VarSpec, partition_selectors, var_expr


@dataclass
class DesignParams:
    """Scalars shared by the analysis and design conditions."""

    sigma_0: float
    sigma: dict[tuple[int, int], float]
    theta: list[float]
    lam: list[float]
    h_lo: int = 1
    h_hi: int = 1
    eps_D: float = 2.0   # multiplier weight in D = (H1 + eps_D H2)^T

    def h_vertices(self) -> list[int]:
        return [self.h_lo] if self.h_lo == self.h_hi else [self.h_lo, self.h_hi]


def _check_lambda_theta(params: DesignParams):
    for i, (th, la) in enumerate(zip(params.theta, params.lam)):
        if th <= 0 or la <= 0:
            raise LambdaThetaViolationError(f"agent {i}: theta, lambda must be positive")
        if 1.0 - la - 1.0 / th < 0:
            raise LambdaThetaViolationError(
                f"agent {i}: 1 - lambda - 1/theta = {1.0 - la - 1.0 / th:.4g} < 0")


def _base_variables(nbar: int) -> dict[str, VarSpec]:
    xd = 5 * nbar
    return {
        "P": VarSpec("P", (nbar, nbar), "symmetric"),
        "R1": VarSpec("R1", (nbar, nbar), "symmetric"),
        "R2": VarSpec("R2", (nbar, nbar), "symmetric"),
        "S": VarSpec("S", (2 * nbar, 2 * nbar), "symmetric"),
        "M1": VarSpec("M1", (xd, nbar), "free"),
        "M2": VarSpec("M2", (xd, nbar), "free"),
    }


def _add_base_posdef(prob: LmiProblem):
    for name in ("P", "R1", "R2"):
        prob.add_pos_def(name, var_expr(prob.variables[name]))


def _schur_wrap(mid: AffineMatrixExpr, h: int, varsigma: int, nbar: int) -> AffineMatrixExpr:
    """[mid, h M_vs; *, -h R_vs] over xi + lifted dims."""
    xd = mid.dim
    top, bot = partition_selectors([xd, nbar])
    big = mid.congruence(top)
    big.add_term(f"M{varsigma}", float(h) * top.T, bot, sym=True)
    big.add_term(f"R{varsigma}", -float(h) * bot.T, bot)
    return big


def _rect_sum(a: RectExpr, b: RectExpr) -> RectExpr:
    out = RectExpr(a.rows, a.cols)
    out.constant = a.constant + b.constant
    out.terms = a.terms + b.terms
    return out


def gain_variable_names(graph: DirectedGraph) -> dict[tuple[int, int] | str, str]:
    """Variable naming for the per-edge gain parameterization."""
    names: dict = {"leader": "Y0"}
    for (i, j) in graph.follower_edges():
        names[(i, j)] = f"Y{i}_{j}"
    return names


def _controller_products(graph: DirectedGraph, dims: Dims, B: np.ndarray,
                         H5: np.ndarray):
    """Pieces of B K_c H5: list of (var, left=B R_i^T, right=C_ij H5)."""
    N, n, m = dims.N, dims.n, dims.m
    rows = partition_selectors([m] * (N + 1))
    C = pair_column_maps(graph, n)
    E = agent_block_selectors(N, n)
    names = gain_variable_names(graph)
    out = []
    for (i, j), Cij in C.items():
        out.append((names[(i, j)], B @ rows[block_index(i, N)].T, Cij @ H5))
    out.append((names["leader"], B @ rows[N].T, E[N] @ H5))
    return out


def _gain_varspecs(graph: DirectedGraph, dims: Dims) -> dict[str, VarSpec]:
    names = gain_variable_names(graph)
    return {v: VarSpec(v, (dims.m, dims.n), "free") for v in names.values()}


def _omega_varspecs(dims: Dims, prefix: str) -> dict[str, VarSpec]:
    return {f"{prefix}{i}": VarSpec(f"{prefix}{i}", (dims.n, dims.n), "symmetric")
            for i in range(dims.N + 1)}


def assemble_theorem1(sys: LiftedSystem, graph: DirectedGraph, K: BlockGain,
                      omegas: list[np.ndarray], params: DesignParams) -> LmiProblem:
    """Analysis condition for a given controller and trigger weights.

    Emits [Xi0 + h Xi_vs + Psi + Q, h M_vs; *, -h R_vs] < 0 for
    vs in {1, 2} and each h vertex, with Psi = Sym{F (A H1 + B K H5 - H2)}
    and F a free multiplier.
    """
    _check_lambda_theta(params)
    dims = sys.dims
    if len(omegas) != dims.N + 1:
        raise DimensionMismatchError("one trigger weight per agent required")
    nbar = dims.nbar
    sel = make_selectors(nbar)
    H1, H2, _, _, H5 = sel.H
    xd = sel.xi_dim

    xi0, xi1, xi2 = build_xi_blocks(nbar)
    trig = build_trigger_block(graph, dims.n, params.sigma_0, params.sigma)
    q_const = trig.evaluate({f"Omega{i}": omegas[i] for i in range(dims.N + 1)})
    # the analysis condition is jointly homogeneous in (decision matrices,
    # trigger weights): scaling the weights by 1/s scales any certificate by
    # the same factor, so normalize the trigger block and record the factor
    # for mapping a solution back to the original weights
    trig_scale = max(float(np.linalg.norm(q_const, 2)), 1e-300)
    q_const = q_const / trig_scale

    psi = AffineMatrixExpr(xd)
    psi.add_term("F", np.eye(xd), sys.A @ H1 + sys.B @ K.K @ H5 - H2, sym=True)

    variables = _base_variables(nbar)
    variables["F"] = VarSpec("F", (xd, nbar), "free")
    prob = LmiProblem(variables=variables)
    _add_base_posdef(prob)
    for h in params.h_vertices():
        for vs, xiv in ((1, xi1), (2, xi2)):
            mid = xi0 + float(h) * xiv + psi
            mid.add_const(q_const)
            prob.add_neg_def(f"h{h}_vs{vs}", _schur_wrap(mid, h, vs, nbar))
    prob.meta = {"kind": "theorem1", "dims": dims, "graph": graph, "params": params,
                 "trigger_scale": trig_scale}
    prob.check_variables()
    return prob


def assemble_theorem2(sys: LiftedSystem, graph: DirectedGraph,
                      params: DesignParams) -> LmiProblem:
    """Model-based co-design of the gains and trigger weights."""
    _check_lambda_theta(params)
    dims = sys.dims
    nbar = dims.nbar
    sel = make_selectors(nbar)
    H1, H2, _, _, H5 = sel.H
    xd = sel.xi_dim
    D = (H1 + params.eps_D * H2).T
    E = agent_block_selectors(dims.N, dims.n)

    xi0, xi1, xi2 = build_xi_blocks(nbar)
    trig = build_trigger_block(graph, dims.n, params.sigma_0, params.sigma,
                               prefix="Omegabar")

    # Psi_bar = Sym{D (A G H1 + B K_c H5 - G H2)}, G = I kron G_c
    psi = AffineMatrixExpr(xd)
    for Eb in E:
        psi.add_term("G", D @ sys.A @ Eb.T, Eb @ H1, sym=True)
        psi.add_term("G", -D @ Eb.T, Eb @ H2, sym=True)
    for var, left, right in _controller_products(graph, dims, sys.B, H5):
        psi.add_term(var, D @ left, right, sym=True)

    variables = _base_variables(nbar)
    variables["G"] = VarSpec("G", (dims.n, dims.n), "free")
    variables.update(_gain_varspecs(graph, dims))
    variables.update(_omega_varspecs(dims, "Omegabar"))
    prob = LmiProblem(variables=variables)
    _add_base_posdef(prob)
    for i in range(dims.N + 1):
        prob.add_pos_def(f"Omegabar{i}", var_expr(variables[f"Omegabar{i}"]))
    for h in params.h_vertices():
        for vs, xiv in ((1, xi1), (2, xi2)):
            mid = xi0 + float(h) * xiv + psi + trig
            prob.add_neg_def(f"h{h}_vs{vs}", _schur_wrap(mid, h, vs, nbar))
    prob.meta = {"kind": "theorem2", "dims": dims, "graph": graph, "params": params}
    prob.check_variables()
    return prob


def _multiplier_scale(theta: ThetaAB, dims: Dims) -> float:
    """Natural magnitude of the free multiplier scalars.

    The consistency block forces q * lambda_min(sum g g') to reach the
    margin scale, so q lives near 1 / lambda_min; folding that factor into
    the coefficients keeps the solved scalars near unity and spares the
    backend a dozen-decade spread.
    """
    nm = dims.nbar + dims.mbar
    gram = np.zeros((nm, nm))
    for C in theta.q_coeffs:
        gram -= C[:nm, :nm]
    lam_min = float(np.linalg.eigvalsh(0.5 * (gram + gram.T)).min())
    if lam_min <= 0:
        return 1.0
    return float(np.clip(1.0 / lam_min, 1.0, 1e12))


def _theta_exprs(theta: ThetaAB, dims: Dims, D: np.ndarray,
                 prefix: str = "q") -> tuple[AffineMatrixExpr, RectExpr, AffineMatrixExpr, list[str], float]:
    """T1, T2, T3 blocks with V1 = [I 0], V2 = [0 D^T-row]; affine in free q.

    Returns the blocks, the free-scalar names, and the scale folded into
    their coefficients (true multipliers are scale * solved values).
    """
    nbar, mbar = dims.nbar, dims.mbar
    td = theta.dim
    xd = D.shape[0]
    V1 = np.hstack([np.eye(nbar + mbar), np.zeros((nbar + mbar, nbar))])
    V2 = np.hstack([np.zeros((xd, nbar + mbar)), D])
    if td != nbar + mbar + nbar:
        raise DimensionMismatchError("Theta dimension does not match the lifted dims")

    t1 = AffineMatrixExpr(nbar + mbar)
    t2 = RectExpr(nbar + mbar, xd)
    t3 = AffineMatrixExpr(xd)
    qnames: list[str] = []
    q_scale = 1.0
    if theta.is_parametric:
        q_scale = _multiplier_scale(theta, dims)
        if theta.q_tied:
            coeff = np.sum(theta.q_coeffs, axis=0)
            coeffs = [("q", coeff)]
        else:
            coeffs = [(f"{prefix}{t:03d}", C) for t, C in enumerate(theta.q_coeffs)]
        for name, C in coeffs:
            qnames.append(name)
            Cs = q_scale * C
            t1.add_term(name, V1 @ Cs, V1.T)
            t2.add_term(name, V1 @ Cs, V2.T)
            t3.add_term(name, V2 @ Cs, V2.T)
    else:
        t1.add_const(V1 @ theta.const @ V1.T)
        t2.add_const(V1 @ theta.const @ V2.T)
        t3.add_const(V2 @ theta.const @ V2.T)
    return t1, t2, t3, qnames, q_scale


def _check_excitation(theta: ThetaAB, dims: Dims):
    """The (1,1) consistency block must be able to go negative definite."""
    nm = dims.nbar + dims.mbar
    if theta.is_parametric:
        G = np.zeros((nm, nm))
        for C in theta.q_coeffs:
            G += -C[:nm, :nm]          # sum of g_t g_t^T over data points
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        if ev.min() <= 1e-12 * max(ev.max(), 1.0):
            raise DegenerateDataError(
                "stacked data [E; U] is row-rank deficient; the consistency "
                "block cannot be made negative definite")
    else:
        ev = np.linalg.eigvalsh(theta.const[:nm, :nm])
        if ev.max() > -1e-12 * max(1.0, abs(ev.min())):
            raise DegenerateDataError(
                "fixed-multiplier consistency block is not negative definite")


def assemble_theorem3(theta: ThetaAB, graph: DirectedGraph,
                      params: DesignParams) -> LmiProblem:
    """Data-driven co-design over every system consistent with the data.

    Emits, per (h, vs) vertex,

        [ T1        F + T2                                0      ]
        [  *   Xi0 + h Xi_vs + Psi_hat + Q_bar + T3    h M_vs    ]  < 0
        [  *             *                             -h R_vs   ]

    with Psi_hat = Sym{-D G H2} and F = [G H1; K_c H5].
    """
    _check_lambda_theta(params)
    dims = theta.dims
    _check_excitation(theta, dims)
    nbar, mbar = dims.nbar, dims.mbar
    sel = make_selectors(nbar)
    H1, H2, _, _, H5 = sel.H
    xd = sel.xi_dim
    D = (H1 + params.eps_D * H2).T
    E = agent_block_selectors(dims.N, dims.n)

    xi0, xi1, xi2 = build_xi_blocks(nbar)
    trig = build_trigger_block(graph, dims.n, params.sigma_0, params.sigma,
                               prefix="Omegabar")
    t1, t2, t3, qnames, q_scale = _theta_exprs(theta, dims, D)

    psi_hat = AffineMatrixExpr(xd)
    for Eb in E:
        psi_hat.add_term("G", -D @ Eb.T, Eb @ H2, sym=True)

    # F = [G H1; K_c H5] stacked into the (1, 2) slot
    f_rect = RectExpr(nbar + mbar, xd)
    top = partition_selectors([nbar, mbar])
    for Eb in E:
        f_rect.add_term("G", top[0].T @ Eb.T, Eb @ H1)
    for var, left, right in _controller_products(graph, dims, np.eye(mbar), H5):
        f_rect.add_term(var, top[1].T @ left, right)

    variables = _base_variables(nbar)
    variables["G"] = VarSpec("G", (dims.n, dims.n), "free")
    variables.update(_gain_varspecs(graph, dims))
    variables.update(_omega_varspecs(dims, "Omegabar"))
    for qn in qnames:
        variables[qn] = VarSpec(qn, (1, 1), "scalar")

    prob = LmiProblem(variables=variables, nonneg_scalars=list(qnames))
    _add_base_posdef(prob)
    for i in range(dims.N + 1):
        prob.add_pos_def(f"Omegabar{i}", var_expr(variables[f"Omegabar{i}"]))

    coupling = _rect_sum(t2, f_rect)
    for h in params.h_vertices():
        for vs, xiv in ((1, xi1), (2, xi2)):
            mid = xi0 + float(h) * xiv + psi_hat + trig + t3
            parts = partition_selectors([nbar + mbar, xd, nbar])
            big = mid.congruence(parts[1]) + t1.congruence(parts[0])
            coupling.place_into(big, parts[0], parts[1])
            big.add_term(f"M{vs}", float(h) * parts[1].T, parts[2], sym=True)
            big.add_term(f"R{vs}", -float(h) * parts[2].T, parts[2])
            prob.add_neg_def(f"h{h}_vs{vs}", big)
    prob.meta = {"kind": "theorem3", "dims": dims, "graph": graph, "params": params,
                 "q_names": qnames, "q_scale": q_scale}
    prob.check_variables()
    return prob


def assemble_theorem4(theta: ThetaAB, graph: DirectedGraph, B_d: np.ndarray,
                      gamma: float, G_fixed: np.ndarray | None,
                      params: DesignParams) -> LmiProblem:
    """Disturbance-attenuation co-design with a fixed transform block.

    The attenuation condition is quadratic in G (through G'G), so this is
    stage two of a two-stage scheme: G comes fixed from a prior data-driven
    design; the remaining variables are re-solved for the given gamma.
    Appends a disturbance column D B_d G and corner -gamma^2 G'G to the
    data-driven condition and adds the output-energy term H1' G'G H1.
    """
    _check_lambda_theta(params)
    if gamma <= 0:
        raise NonPositiveGammaError(f"gamma must be positive, got {gamma}")
    if G_fixed is None:
        raise MissingStageOneError(
            "no transform block available: solve the data-driven design first "
            "and pass its recovered G")
    dims = theta.dims
    _check_excitation(theta, dims)
    if B_d.shape[1] != dims.nbar:
        raise DimensionMismatchError(
            "the attenuation condition needs a square lifted disturbance "
            "channel (n_d = n) for the d = G d_z substitution")
    nbar, mbar = dims.nbar, dims.mbar
    sel = make_selectors(nbar)
    H1, H2, _, _, H5 = sel.H
    xd = sel.xi_dim
    D = (H1 + params.eps_D * H2).T
    Gbig = np.kron(np.eye(dims.N + 1), np.asarray(G_fixed, dtype=float))

    xi0, xi1, xi2 = build_xi_blocks(nbar)
    trig = build_trigger_block(graph, dims.n, params.sigma_0, params.sigma,
                               prefix="Omegabar")
    t1, t2, t3, qnames, q_scale = _theta_exprs(theta, dims, D)

    mid_const = AffineMatrixExpr(xd)
    mid_const.add_const(-D @ Gbig @ H2, sym=True)              # Psi_hat with fixed G
    mid_const.add_const(H1.T @ Gbig.T @ Gbig @ H1)             # output energy

    f_rect = RectExpr(nbar + mbar, xd)
    top = partition_selectors([nbar, mbar])
    f_rect.add_const(top[0].T @ (Gbig @ H1))
    for var, left, right in _controller_products(graph, dims, np.eye(mbar), H5):
        f_rect.add_term(var, top[1].T @ left, right)

    variables = _base_variables(nbar)
    variables.update(_gain_varspecs(graph, dims))
    variables.update(_omega_varspecs(dims, "Omegabar"))
    for qn in qnames:
        variables[qn] = VarSpec(qn, (1, 1), "scalar")

    prob = LmiProblem(variables=variables, nonneg_scalars=list(qnames))
    _add_base_posdef(prob)
    for i in range(dims.N + 1):
        prob.add_pos_def(f"Omegabar{i}", var_expr(variables[f"Omegabar{i}"]))

    dist_col = D @ B_d @ Gbig                                  # xd x nbar
    corner = -(gamma ** 2) * (Gbig.T @ Gbig)
    coupling = _rect_sum(t2, f_rect)
    for h in params.h_vertices():
        for vs, xiv in ((1, xi1), (2, xi2)):
            mid = xi0 + float(h) * xiv + mid_const + trig + t3
            parts = partition_selectors([nbar + mbar, xd, nbar, nbar])
            big = mid.congruence(parts[1]) + t1.congruence(parts[0])
            coupling.place_into(big, parts[0], parts[1])
            big.add_term(f"M{vs}", float(h) * parts[1].T, parts[2], sym=True)
            big.add_term(f"R{vs}", -float(h) * parts[2].T, parts[2])
            big.add_const(parts[1].T @ dist_col @ parts[3], sym=True)
            big.add_const(parts[3].T @ corner @ parts[3])
            prob.add_neg_def(f"h{h}_vs{vs}", big)
    prob.meta = {"kind": "theorem4", "dims": dims, "graph": graph, "params": params,
                 "q_names": qnames, "q_scale": q_scale, "gamma": float(gamma),
                 "G_fixed": np.asarray(G_fixed, dtype=float)}
    prob.check_variables()
    return prob

"""Semidefinite feasibility backend and design recovery.

Acceptance policy: a backend's status label is advisory; every candidate
iterate is re-checked against the blocks numerically, and only a point
whose realized margins are strictly inside the cone is returned as a
Solution.  Clarabel is driven through the canonicalized problem data so
that a stalled-but-feasible iterate (which cvxpy would discard) can still
be recovered and verified.  Infeasibility is reported only from a clean
infeasibility certificate.

Problems whose blocks all have zero constant term are scale-invariant,
so their strictness margin is set to 1 outright; blocks with constants
keep an eps-sized margin scaled by the constant's magnitude.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from ..errors import SingularGError, SolverNumericalFailureError
from ..graph import DirectedGraph
from ..models import BlockGain, Dims, lift_controller
from .assemble import gain_variable_names
from .blocks import assemble_omega_ab
from .expr import LmiProblem

_DEFAULT_EPS = 1e-6


@dataclass
class Solution:
    values: dict[str, np.ndarray]
    margins: dict[str, float]          # realized max-eig of neg blocks (min-eig of pos, negated)
    solver: str
    status: str
    meta: dict = field(default_factory=dict)

    @property
    def worst_margin(self) -> float:
        return max(self.margins.values()) if self.margins else float("nan")


@dataclass
class Infeasible:
    status: str
    solver: str
    detail: str = ""


def default_eps_feas() -> float:
    env = os.environ.get("ETC_SOLVER_TOL")
    return float(env) if env else _DEFAULT_EPS


def _make_cvxpy_vars(p: LmiProblem):
    import cvxpy as cp

    varmap = {}
    for name, spec in p.variables.items():
        if spec.kind == "symmetric":
            varmap[name] = cp.Variable(spec.shape, name=name, symmetric=True)
        elif spec.kind == "scalar":
            varmap[name] = cp.Variable((1, 1), name=name,
                                       nonneg=name in p.nonneg_scalars)
        else:
            varmap[name] = cp.Variable(spec.shape, name=name)
    return varmap


def _realized_margins(p: LmiProblem, values: dict[str, np.ndarray]) -> dict[str, float]:
    out = {}
    for label, e in p.neg_def:
        M = e.evaluate(values)
        out[label] = float(np.linalg.eigvalsh(M).max())
    for label, e in p.pos_def:
        M = e.evaluate(values)
        out[f"{label}(+)"] = float(-np.linalg.eigvalsh(M).min())
    return out


def _extract_values(p: LmiProblem, varmap) -> dict[str, np.ndarray] | None:
    values = {}
    for name, var in varmap.items():
        if var.value is None:
            return None
        val = np.atleast_2d(np.asarray(var.value, dtype=float))
        if p.variables[name].kind == "symmetric":
            val = 0.5 * (val + val.T)
        values[name] = val
    return values


_CLARABEL_OPTS = {
    "max_iter": 400,
    # generous acceptance thresholds: the iterate is re-verified here anyway
    "reduced_tol_gap_abs": 1e-2,
    "reduced_tol_gap_rel": 1e-2,
    "reduced_tol_feas": 1e-6,
    "reduced_tol_ktratio": 1e9,
    "equilibrate_min_scaling": 1e-8,
    "equilibrate_max_scaling": 1e8,
}


def _clarabel_attempt(problem, p: LmiProblem, varmap):
    """Drive Clarabel on the canonicalized data; returns (status, values).

    The raw iterate is routed back through the reduction chain with a
    forced Solved label so that stalled runs still yield a candidate.
    """
    import cvxpy as cp
    from cvxpy.reductions.solvers.conic_solvers.clarabel_conif import CLARABEL

    data, chain, inverse = problem.get_problem_data(cp.CLARABEL)
    raw = CLARABEL().solve_via_data(data, warm_start=False, verbose=False,
                                    solver_opts=dict(_CLARABEL_OPTS))
    status = str(raw.status)
    values = None
    if raw.x is not None and np.all(np.isfinite(np.asarray(raw.x, dtype=float))):
        shim = SimpleNamespace(status="Solved", obj_val=raw.obj_val, x=raw.x,
                               z=raw.z, s=raw.s, solve_time=raw.solve_time,
                               iterations=raw.iterations)
        try:
            sol = chain.invert(shim, inverse)
            problem.unpack(sol)
            values = _extract_values(p, varmap)
        except Exception:
            values = None
    return status, values


def solve_feasibility(p: LmiProblem, eps_feas: float | None = None,
                      solvers: tuple[str, ...] = ("CLARABEL", "SCS")):
    """Solve the feasibility problem; returns Solution or Infeasible.

    Raises SolverNumericalFailureError when no backend produces either a
    verified strictly-feasible point or a clean infeasibility certificate.
    """
    import cvxpy as cp

    if eps_feas is None:
        eps_feas = default_eps_feas()
    p.check_variables()
    varmap = _make_cvxpy_vars(p)

    homogeneous = all(not np.any(e.constant) for _, e in p.neg_def + p.pos_def)

    def block_margin(e):
        if homogeneous:
            return 1.0
        return eps_feas * e.dim * max(1.0, float(np.linalg.norm(e.constant, 2)))

    constraints = []
    for label, e in p.neg_def:
        constraints.append(e.to_cvxpy(varmap) << -block_margin(e) * np.eye(e.dim))
    for label, e in p.pos_def:
        constraints.append(e.to_cvxpy(varmap) >> block_margin(e) * np.eye(e.dim))

    # anchor against the free scaling ray (see module docstring in assemble)
    anchor = [cp.trace(varmap[label]) for label, _ in p.pos_def if label in varmap]
    anchor += [varmap[name][0, 0] for name in p.nonneg_scalars]
    objective = cp.Minimize(sum(anchor)) if anchor else cp.Minimize(0)
    problem = cp.Problem(objective, constraints)

    infeasible_verdict = None
    last_error = None

    def polish(candidate: dict[str, np.ndarray], tag: str):
        """Pin the multiplier scalars of a near-feasible point and re-solve.

        The free scalars are what stiffen the KKT systems; with them fixed
        the remaining problem has the benign model-based structure.  Any
        verified point of the pinned problem, together with the pinned
        scalars, certifies the original problem.
        """
        from .expr import substitute_scalars

        if not p.nonneg_scalars:
            return None
        pins = {name: max(float(candidate[name][0, 0]), 0.0)
                for name in p.nonneg_scalars if name in candidate}
        if not pins or all(v == 0.0 for v in pins.values()):
            return None
        sub = substitute_scalars(p, pins)
        sub_result = solve_feasibility(sub, eps_feas=eps_feas, solvers=("CLARABEL",))
        if isinstance(sub_result, Solution):
            merged = dict(sub_result.values)
            merged.update({k: np.array([[v]]) for k, v in pins.items()})
            margins = _realized_margins(p, merged)
            if max(margins.values()) < 0:
                return Solution(values=merged, margins=margins,
                                solver=f"{tag}+polish", status="polished",
                                meta=dict(p.meta))
        return None

    for solver in solvers:
        if solver == "CLARABEL":
            try:
                status, values = _clarabel_attempt(problem, p, varmap)
            except Exception as exc:
                last_error = exc
                continue
            if values is not None:
                margins = _realized_margins(p, values)
                if max(margins.values()) < 0:
                    return Solution(values=values, margins=margins, solver="CLARABEL",
                                    status=status, meta=dict(p.meta))
                polished = polish(values, "CLARABEL")
                if polished is not None:
                    return polished
            if status == "PrimalInfeasible":
                return Infeasible(status="infeasible", solver="CLARABEL")
            if status == "AlmostPrimalInfeasible":
                infeasible_verdict = Infeasible(status="infeasible_inaccurate",
                                                solver="CLARABEL")
            last_error = RuntimeError(f"CLARABEL: status {status} without verified point")
            continue

        try:
            kwargs = {"eps": 1e-7, "max_iters": 60_000} if solver == "SCS" else {}
            problem.solve(solver=solver, **kwargs)
        except Exception as exc:
            last_error = exc
            continue
        status = problem.status
        if status in (cp.INFEASIBLE,):
            return Infeasible(status=status, solver=solver)
        if status in (cp.INFEASIBLE_INACCURATE,):
            infeasible_verdict = Infeasible(status=status, solver=solver)
            continue
        values = _extract_values(p, varmap)
        if values is not None:
            margins = _realized_margins(p, values)
            if max(margins.values()) < 0:
                return Solution(values=values, margins=margins, solver=solver,
                                status=status, meta=dict(p.meta))
            polished = polish(values, solver)
            if polished is not None:
                return polished
            last_error = RuntimeError(
                f"{solver}: solution violates a block by {max(margins.values()):.2e}")
        else:
            last_error = RuntimeError(f"{solver}: status {status} without values")

    if infeasible_verdict is not None:
        return infeasible_verdict
    raise SolverNumericalFailureError(f"all backends failed: {last_error}")


def recover_design(sol: Solution, rcond: float = 1e-9):
    """Undo the design transform: gains K_ij = Y_ij G^-1, weights
    W_i = G^-T Wbar_i G^-1.

    Returns (BlockGain, [W_i], Omega_a, Omega_b).  Raises SingularGError
    when the transform block is numerically singular.
    """
    graph: DirectedGraph = sol.meta["graph"]
    dims: Dims = sol.meta["dims"]
    params = sol.meta["params"]
    G = sol.values.get("G", np.eye(dims.n))
    sv = np.linalg.svd(G, compute_uv=False)
    if sv.min() < rcond * sv.max():
        raise SingularGError(f"transform block singular: sv ratio {sv.min() / sv.max():.2e}")
    G_inv = np.linalg.inv(G)

    names = gain_variable_names(graph)
    pair_gains = {edge: sol.values[names[edge]] @ G_inv
                  for edge in graph.follower_edges()}
    K_0 = sol.values[names["leader"]] @ G_inv
    gains = lift_controller(K_0, pair_gains, graph)

    omegas = []
    for i in range(dims.N + 1):
        W = G_inv.T @ sol.values[f"Omegabar{i}"] @ G_inv
        omegas.append(0.5 * (W + W.T))
    omega_a, omega_b = assemble_omega_ab(graph, omegas, params.sigma_0, params.sigma)
    return gains, omegas, omega_a, omega_b


def analysis_certificate_from_design(sol: Solution) -> dict[str, np.ndarray]:
    """Map a co-design certificate back to analysis coordinates.

    With eps = G z the transformed functional matrices certify the
    analysis condition at the recovered gains and weights:
    P -> Gb^-T P Gb^-1 (Gb the lifted transform), same for R1/R2, S on two
    copies, M_vs -> (I5 kron Gb)^-T M_vs Gb^-1, and the free analysis
    multiplier becomes F = (I5 kron Gb)^-T (H1 + eps_D H2)^T.
    """
    from .blocks import make_selectors

    dims: Dims = sol.meta["dims"]
    params = sol.meta["params"]
    G = sol.values.get("G", np.eye(dims.n))
    Gb = np.kron(np.eye(dims.N + 1), G)
    Gb_inv = np.linalg.inv(Gb)
    G2_inv = np.kron(np.eye(2), Gb_inv)
    G5_inv = np.kron(np.eye(5), Gb_inv)
    sel = make_selectors(dims.nbar)
    H1, H2 = sel.H[0], sel.H[1]
    D = (H1 + params.eps_D * H2).T
    return {
        "P": Gb_inv.T @ sol.values["P"] @ Gb_inv,
        "R1": Gb_inv.T @ sol.values["R1"] @ Gb_inv,
        "R2": Gb_inv.T @ sol.values["R2"] @ Gb_inv,
        "S": G2_inv.T @ sol.values["S"] @ G2_inv,
        "M1": G5_inv.T @ sol.values["M1"] @ Gb_inv,
        "M2": G5_inv.T @ sol.values["M2"] @ Gb_inv,
        "F": G5_inv.T @ D,
    }

"""End-to-end orchestration: collect, design, simulate, report.

The design step nondimensionalizes the state coordinates using per-state
RMS magnitudes taken from the data (or from a probe simulation for the
model-based path).  The feasibility problems are assembled and solved in
scaled coordinates, which compresses the data matrices' condition number
by orders of magnitude, and the recovered design is mapped back exactly:
with scaled errors et = S e, a gain Kt acting on et equals K = Kt S on e,
and a trigger weight Wt on et equals W = S' Wt S on e.  The mapping is a
change of units, not an approximation; feasibility verdicts in the two
coordinate systems coincide.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (
    DataMatrices,
    DataSet,
    build_data_matrices,
    build_noise_multiplier,
    build_theta_AB,
    collect_trajectory,
    excitation_report,
)
from .errors import NonPositiveGammaError
from .ets import EtsParams
from .graph import DirectedGraph
from .lmi import (
    DesignParams,
    Infeasible,
    Solution,
    assemble_theorem2,
    assemble_theorem3,
    assemble_theorem4,
    recover_design,
    solve_feasibility,
)
from .lmi.solve import analysis_certificate_from_design
from .models import BlockGain, LiftedSystem, lift_controller, lift_error_system
from .sim import SimConfig, SimTrace, run_closed_loop


@dataclass
class DesignResult:
    method: str
    feasible: bool
    gains: BlockGain | None
    omegas: list[np.ndarray] | None
    margins: dict[str, float]
    solver: str
    state_scale: np.ndarray            # per-coordinate scale s (scaled = s * x)
    certificate: dict[str, np.ndarray] = field(default_factory=dict)
    gamma: float | None = None
    detail: str = ""

    @property
    def worst_margin(self) -> float:
        return max(self.margins.values()) if self.margins else float("nan")


def design_params_from_config(cfg: RunConfig) -> DesignParams:
    return DesignParams(
        sigma_0=cfg.ets.sigma_0,
        sigma=dict(cfg.ets.sigma),
        theta=list(cfg.ets.theta),
        lam=list(cfg.ets.lam),
        h_lo=cfg.ets.h,
        h_hi=cfg.ets.h,
        eps_D=cfg.eps_D,
    )


def collect(cfg: RunConfig, seed: int | None = None) -> DataSet:
    rng = np.random.default_rng((seed if seed is not None else cfg.seed) + 1)
    scale = cfg.collect_initial_scale
    init = [scale * rng.uniform(-1, 1, size=cfg.n) for _ in range(cfg.graph.n_agents)]
    return collect_trajectory(
        cfg.agents, cfg.graph, rho=cfg.rho,
        seed=seed if seed is not None else cfg.seed,
        input_range=cfg.input_range, w_bar=cfg.w_bar, B_w=cfg.B_w,
        initial_states=init)


def coordinate_scales(dm: DataMatrices, n: int,
                      floor: float = 1e-9) -> np.ndarray:
    """Per-state-coordinate scale 1/RMS, shared across agents."""
    scales = np.ones(n)
    for k in range(n):
        rms = float(np.sqrt(np.mean(dm.E[k::n, :] ** 2)))
        scales[k] = 1.0 / max(rms, floor)
    return scales


def _scale_block(scales: np.ndarray, copies: int) -> np.ndarray:
    return np.kron(np.eye(copies), np.diag(scales))


def _scaled_data(dm: DataMatrices, scales: np.ndarray, n_agents: int) -> DataMatrices:
    Sb = _scale_block(scales, n_agents)
    return DataMatrices(E_plus=Sb @ dm.E_plus, E=Sb @ dm.E, U=dm.U.copy())


def _unscale_design(sol: Solution, scales: np.ndarray):
    """Recover gains and weights, mapped back to original coordinates."""
    gains_s, omegas_s, _, _ = recover_design(sol)
    S = np.diag(scales)
    graph: DirectedGraph = sol.meta["graph"]
    pair = {e: K @ S for e, K in gains_s.pair_gains.items()}
    gains = lift_controller(gains_s.K_0 @ S, pair, graph)
    omegas = [S @ W @ S for W in omegas_s]
    return gains, omegas


def _certificate(sol: Solution, scales: np.ndarray, n_agents: int) -> dict[str, np.ndarray]:
    cert_s = analysis_certificate_from_design(sol)
    Sb = _scale_block(scales, n_agents)
    out = {}
    for name in ("P", "R1", "R2"):
        out[name] = Sb.T @ cert_s[name] @ Sb
    out["G"] = sol.values.get("G", np.eye(len(scales)))
    out["state_scale"] = scales
    return out


def design_model(cfg: RunConfig) -> DesignResult:
    """Model-based co-design on the known lifted system."""
    sys = lift_error_system(cfg.agents, cfg.graph)
    params = design_params_from_config(cfg)
    prob = assemble_theorem2(sys, cfg.graph, params)
    sol = solve_feasibility(prob, eps_feas=cfg.eps_feas)
    scales = np.ones(cfg.n)
    if isinstance(sol, Infeasible):
        return DesignResult(method="model", feasible=False, gains=None, omegas=None,
                            margins={}, solver=sol.solver, state_scale=scales,
                            detail=sol.status)
    gains, omegas = _unscale_design(sol, scales)
    return DesignResult(method="model", feasible=True, gains=gains, omegas=omegas,
                        margins=sol.margins, solver=sol.solver, state_scale=scales,
                        certificate=_certificate(sol, scales, cfg.graph.n_agents))


def design_data(cfg: RunConfig, ds: DataSet, method: str = "data") -> DesignResult:
    """Data-driven co-design from noisy measurements."""
    dm = build_data_matrices(ds)
    excitation_report(dm)
    scales = coordinate_scales(dm, cfg.n)
    n_agents = cfg.graph.n_agents
    dm_s = _scaled_data(dm, scales, n_agents)
    Sb = _scale_block(scales, n_agents)
    sys = lift_error_system(cfg.agents, cfg.graph)

    nm = build_noise_multiplier(cfg.rho, cfg.w_bar,
                                q="free" if cfg.q_policy == "free" else
                                ("scalar" if cfg.q_policy == "scalar" else "ones"))
    theta = build_theta_AB(dm_s, Sb @ cfg.B_w, nm, sys.dims)
    params = design_params_from_config(cfg)
    prob = assemble_theorem3(theta, cfg.graph, params)
    sol = solve_feasibility(prob, eps_feas=cfg.eps_feas)
    if isinstance(sol, Infeasible):
        return DesignResult(method=method, feasible=False, gains=None, omegas=None,
                            margins={}, solver=sol.solver, state_scale=scales,
                            detail=sol.status)
    gains, omegas = _unscale_design(sol, scales)
    res = DesignResult(method=method, feasible=True, gains=gains, omegas=omegas,
                       margins=sol.margins, solver=sol.solver, state_scale=scales,
                       certificate=_certificate(sol, scales, n_agents))
    res.certificate["_solution"] = sol   # stage-one handle for the attenuation path
    return res


def design_hinf(cfg: RunConfig, ds: DataSet, gamma: float | None = None,
                rel_width: float = 1e-2) -> DesignResult:
    """Two-stage attenuation design: fix G from the data-driven stage, then
    re-solve with the disturbance column at a given gamma, bisecting when
    no gamma is supplied.

    The stage-two certificate bounds the scaled-error energy by gamma^2
    times the disturbance energy; the reported gamma is inflated by the
    scale factor so it bounds the original-coordinate error energy too.
    """
    stage1 = design_data(cfg, ds, method="data")
    if not stage1.feasible:
        return DesignResult(method="hinf", feasible=False, gains=None, omegas=None,
                            margins={}, solver=stage1.solver,
                            state_scale=stage1.state_scale,
                            detail="stage one infeasible")
    sol1: Solution = stage1.certificate["_solution"]
    scales = stage1.state_scale
    n_agents = cfg.graph.n_agents
    Sb = _scale_block(scales, n_agents)
    sys = lift_error_system(cfg.agents, cfg.graph)
    dm_s = _scaled_data(build_data_matrices(ds), scales, n_agents)
    nm = build_noise_multiplier(cfg.rho, cfg.w_bar,
                                q="free" if cfg.q_policy == "free" else
                                ("scalar" if cfg.q_policy == "scalar" else "ones"))
    theta = build_theta_AB(dm_s, Sb @ cfg.B_w, nm, sys.dims)
    params = design_params_from_config(cfg)
    B_d_scaled = Sb @ sys.B_d if cfg.raw.get("hinf", {}).get("b_d") != "b_w" else Sb @ cfg.B_w
    G_fixed = sol1.values["G"]
    gamma_to_original = float(np.max(1.0 / scales))   # ||Sb^-1||_2 for diagonal Sb

    def try_gamma(gam: float):
        prob = assemble_theorem4(theta, cfg.graph, B_d_scaled, gam, G_fixed, params)
        return solve_feasibility(prob, eps_feas=cfg.eps_feas)

    if gamma is not None:
        if gamma <= 0:
            raise NonPositiveGammaError("gamma must be positive")
        gam_scaled = gamma / gamma_to_original
        sol = try_gamma(gam_scaled)
        if isinstance(sol, Infeasible):
            return DesignResult(method="hinf", feasible=False, gains=None, omegas=None,
                                margins={}, solver=sol.solver, state_scale=scales,
                                gamma=gamma, detail=f"infeasible at gamma={gamma}")
        gains, omegas = _unscale_design(sol, scales)
        res = DesignResult(method="hinf", feasible=True, gains=gains, omegas=omegas,
                           margins=sol.margins, solver=sol.solver, state_scale=scales,
                           gamma=gamma,
                           certificate=_certificate(sol, scales, n_agents))
        return res

    # bracket then bisect the scaled attenuation level
    hi = 1.0
    sol_hi = None
    for _ in range(40):
        sol = try_gamma(hi)
        if isinstance(sol, Solution):
            sol_hi = sol
            break
        hi *= 4.0
    if sol_hi is None:
        return DesignResult(method="hinf", feasible=False, gains=None, omegas=None,
                            margins={}, solver="-", state_scale=scales,
                            detail="no feasible gamma found while bracketing")
    lo = 0.0
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        sol = try_gamma(mid)
        if isinstance(sol, Solution):
            hi, sol_hi = mid, sol
        else:
            lo = mid
    gains, omegas = _unscale_design(sol_hi, scales)
    res = DesignResult(method="hinf", feasible=True, gains=gains, omegas=omegas,
                       margins=sol_hi.margins, solver=sol_hi.solver, state_scale=scales,
                       gamma=hi * gamma_to_original,
                       certificate=_certificate(sol_hi, scales, n_agents))
    res.certificate["gamma_scaled"] = np.array([[hi]])
    return res


def make_disturbance(cfg: RunConfig, seed: int, n_d_total: int) -> np.ndarray:
    """Seeded bounded disturbance: uniform entries over an initial window."""
    spec = cfg.disturbance or {}
    kind = spec.get("kind", "random")
    steps = int(spec.get("steps", max(1, cfg.horizon // 4)))
    mag = float(spec.get("magnitude", 1.0))
    d = np.zeros((cfg.horizon, n_d_total))
    if kind == "zero":
        return d
    if kind == "given":
        seq = np.asarray(spec["sequence"], dtype=float)
        d[:seq.shape[0]] = seq
        return d
    rng = np.random.default_rng(seed)
    d[:steps] = mag * rng.uniform(-1.0, 1.0, size=(steps, n_d_total))
    return d


def simulate(cfg: RunConfig, result: DesignResult, horizon: int | None = None,
             disturbance: np.ndarray | None = None,
             initial_states=None, static_rule: bool = False) -> SimTrace:
    ets = EtsParams(
        graph=cfg.graph, sigma_0=cfg.ets.sigma_0, sigma=dict(cfg.ets.sigma),
        theta=list(cfg.ets.theta), lam=list(cfg.ets.lam),
        omega=result.omegas, h=cfg.ets.h, eta_0=list(cfg.ets.eta_0))
    sys = lift_error_system(cfg.agents, cfg.graph)
    sim_cfg = SimConfig(
        horizon=horizon if horizon is not None else cfg.horizon,
        initial_states=initial_states if initial_states is not None else cfg.initial_states,
        disturbance=disturbance,
        B_d=sys.B_d if disturbance is not None else None,
        static_rule=static_rule)
    return run_closed_loop(cfg.agents, result.gains, ets, sim_cfg, T_k=cfg.T_k)


# -- design file io --------------------------------------------------------

def design_to_dict(res: DesignResult) -> dict:
    out = {
        "method": res.method,
        "feasible": res.feasible,
        "solver": res.solver,
        "margins": res.margins,
        "detail": res.detail,
        "state_scale": res.state_scale.tolist(),
    }
    if res.gamma is not None:
        out["gamma"] = res.gamma
    if res.feasible:
        out["K_0"] = res.gains.K_0.tolist()
        out["pair_gains"] = {f"{i},{j}": K.tolist()
                             for (i, j), K in sorted(res.gains.pair_gains.items())}
        out["omegas"] = [W.tolist() for W in res.omegas]
        out["certificate"] = {k: v.tolist() for k, v in res.certificate.items()
                              if isinstance(v, np.ndarray)}
    return out


def save_design(res: DesignResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(design_to_dict(res), fh, indent=1)


def load_design(path, graph: DirectedGraph) -> DesignResult:
    with open(path) as fh:
        d = json.load(fh)
    gains = None
    omegas = None
    cert = {}
    if d["feasible"]:
        pair = {tuple(int(v) for v in key.split(",")): np.asarray(K, dtype=float)
                for key, K in d["pair_gains"].items()}
        gains = lift_controller(np.asarray(d["K_0"], dtype=float), pair, graph)
        omegas = [np.asarray(W, dtype=float) for W in d["omegas"]]
        cert = {k: np.asarray(v, dtype=float) for k, v in d.get("certificate", {}).items()}
    return DesignResult(
        method=d["method"], feasible=d["feasible"], gains=gains, omegas=omegas,
        margins=d.get("margins", {}), solver=d.get("solver", "?"),
        state_scale=np.asarray(d["state_scale"], dtype=float),
        certificate=cert, gamma=d.get("gamma"), detail=d.get("detail", ""))

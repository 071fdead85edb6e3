"""Run configuration: a single YAML tree driving the whole pipeline.

Matrices are row-major nested arrays; agents may instead use the
mass-spring shorthand ``msd: [f, phi, varphi]``.  Agent 0 is the leader.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .ets import EtsParams, validate_params
from .graph import DirectedGraph, build_graph
from .models import AgentModel, discretize, msd_matrices


@dataclass
class RunConfig:
    agents: list[AgentModel]
    graph: DirectedGraph
    T_k: float
    ets: EtsParams
    # data collection
    rho: int
    w_bar: float
    input_range: tuple[float, float]
    seed: int
    b_w_scale: float
    collect_initial_scale: float
    # solver
    eps_feas: float
    eps_D: float
    q_policy: str
    # simulation
    horizon: int
    initial_states: list[np.ndarray]
    disturbance: dict | None
    # attenuation stage
    gamma: float | None
    validation_runs: int
    out_dir: Path
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.agents[0].n

    @property
    def B_w(self) -> np.ndarray:
        return self.b_w_scale * np.eye(self.graph.n_agents * self.n)

    def sigma_dict(self) -> dict[tuple[int, int], float]:
        return dict(self.ets.sigma)


def _parse_agent(entry, T_k: float, discretize_flag: bool) -> AgentModel:
    if "msd" in entry:
        f, phi, varphi = entry["msd"]
        A, B = msd_matrices(float(f), float(phi), float(varphi))
        A, B = discretize(A, B, T_k)
        return AgentModel(A, B)
    if "A" not in entry or "B" not in entry:
        raise ConfigError(f"agent entry needs msd or A/B matrices: {entry}")
    A = np.asarray(entry["A"], dtype=float)
    B = np.asarray(entry["B"], dtype=float)
    if discretize_flag:
        A, B = discretize(A, B, T_k)
    D = np.asarray(entry["D"], dtype=float) if "D" in entry else None
    return AgentModel(A, B, D=D)


def _broadcast(value, n_agents: int, name: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * n_agents
    vals = [float(v) for v in value]
    if len(vals) != n_agents:
        raise ConfigError(f"{name} needs one value per agent ({n_agents}), got {len(vals)}")
    return vals


def _parse_sigma(raw: dict) -> dict[tuple[int, int], float]:
    out = {}
    for key, val in raw.items():
        if isinstance(key, str):
            i, j = (int(part) for part in key.replace("(", "").replace(")", "").split(","))
        else:
            i, j = key
        out[(i, j)] = float(val)
    return out


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        tree = yaml.safe_load(fh)
    return parse_config(tree, base_dir=path.parent)


def parse_config(tree: dict, base_dir: Path | None = None) -> RunConfig:
    try:
        return _parse_config(tree, base_dir or Path("."))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def _parse_config(tree: dict, base_dir: Path) -> RunConfig:
    T_k = float(tree.get("T_k", 1.0))
    discretize_flag = bool(tree.get("discretize", True))
    agents = [_parse_agent(a, T_k, discretize_flag) for a in tree["agents"]]
    graph = build_graph(np.asarray(tree["graph"]["adjacency"]))
    if len(agents) != graph.n_agents:
        raise ConfigError(f"{len(agents)} agents for a {graph.n_agents}-node graph")

    e = tree["ets"]
    n_agents = graph.n_agents
    ets = EtsParams(
        graph=graph,
        sigma_0=float(e["sigma_0"]),
        sigma=_parse_sigma(e["sigma"]),
        theta=_broadcast(e["theta"], n_agents, "ets.theta"),
        lam=_broadcast(e["lam"], n_agents, "ets.lam"),
        omega=[np.eye(agents[0].n)] * n_agents,   # placeholder until designed
        h=int(e.get("h", 1)),
        eta_0=_broadcast(e.get("eta_0", 0.0), n_agents, "ets.eta_0"),
    )
    issues = [v for v in validate_params(ets) if "Omega" not in v]
    if issues:
        raise ConfigError("; ".join(issues))

    d = tree.get("data", {})
    s = tree.get("solver", {})
    sim = tree.get("sim", {})
    hinf = tree.get("hinf", {})
    init = sim.get("initial_states")
    if init is None:
        initial_states = [np.zeros(agents[0].n) for _ in range(n_agents)]
    else:
        initial_states = [np.asarray(x, dtype=float) for x in init]
        if len(initial_states) != n_agents:
            raise ConfigError("sim.initial_states needs one vector per agent")

    rho = int(d.get("rho", 40))
    if rho < 1:
        raise ConfigError(f"data.rho must be >= 1, got {rho}")
    q_policy = str(s.get("q_policy", "free"))
    if q_policy not in ("free", "ones", "scalar"):
        raise ConfigError(f"solver.q_policy must be free, ones or scalar, got {q_policy!r}")

    return RunConfig(
        agents=agents,
        graph=graph,
        T_k=T_k,
        ets=ets,
        rho=rho,
        w_bar=float(d.get("w_bar", 0.0)),
        input_range=tuple(float(v) for v in d.get("input_range", (-1.0, 1.0))),
        seed=int(d.get("seed", 0)),
        b_w_scale=float(d.get("b_w_scale", 0.01)),
        collect_initial_scale=float(d.get("collect_initial_scale", 1.0)),
        eps_feas=float(s.get("eps_feas", 1e-6)),
        eps_D=float(s.get("eps_D", 2.0)),
        q_policy=q_policy,
        horizon=int(sim.get("horizon", 100)),
        initial_states=initial_states,
        disturbance=sim.get("disturbance"),
        gamma=(float(hinf["gamma"]) if hinf.get("gamma") is not None else None),
        validation_runs=int(hinf.get("validation_runs", 10)),
        out_dir=Path(tree.get("out_dir", "out")),
        raw=tree,
    )


EXAMPLE1_TREE: dict = {
    "agents": [
        {"msd": [1, 1, 2]},
        {"msd": [1, 1.1, 2]},
        {"msd": [1, 1.2, 2]},
        {"msd": [1, 0.8, 2]},
    ],
    "T_k": 0.01,
    "discretize": True,
    "graph": {"adjacency": [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [0, 1, 0, 0]]},
    "ets": {
        "sigma_0": 0.02,
        "sigma": {"1,0": 0.05, "2,1": 0.05, "3,1": 0.05},
        "theta": 5.0,
        "lam": 0.2,
        "eta_0": 0.0,
        # one trigger check per discretization step of 0.01 s
        "h": 1,
    },
    "data": {
        "rho": 40,
        "w_bar": 0.001,
        "input_range": [-1, 1],
        "seed": 7,
        "b_w_scale": 0.01,
        "collect_initial_scale": 1.0,
    },
    "solver": {"eps_feas": 1e-6, "eps_D": 2.0, "q_policy": "free"},
    "sim": {
        "horizon": 100,
        "initial_states": [[0.1, -0.1], [1.0, 0.1], [1.0, -1.0], [0.2, -0.1]],
        "disturbance": None,
    },
    "hinf": {"gamma": None, "validation_runs": 10},
    "out_dir": "out/example1",
}


def example1_config() -> RunConfig:
    return parse_config(EXAMPLE1_TREE)


def write_example1_config(path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(EXAMPLE1_TREE, fh, sort_keys=False)

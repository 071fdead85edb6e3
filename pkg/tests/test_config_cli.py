import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from etconsensus.cli import main
from etconsensus.config import (
    EXAMPLE1_TREE,
    example1_config,
    load_config,
    parse_config,
    write_example1_config,
)
from etconsensus.errors import ConfigError


class TestConfig:
    def test_example1_values(self):
        cfg = example1_config()
        assert cfg.graph.n_agents == 4
        assert cfg.rho == 40
        assert cfg.w_bar == 0.001
        assert cfg.b_w_scale == 0.01
        assert cfg.ets.sigma_0 == 0.02
        assert cfg.ets.sigma == {(1, 0): 0.05, (2, 1): 0.05, (3, 1): 0.05}
        assert cfg.ets.theta == [5.0] * 4
        assert cfg.ets.lam == [0.2] * 4
        assert cfg.ets.h == 1
        assert cfg.T_k == 0.01
        assert cfg.horizon == 100
        assert np.allclose(cfg.initial_states[1], [1.0, 0.1])
        # discretized mass-spring leader dynamics
        assert np.allclose(cfg.agents[0].A[0], [0.99995, 0.0099], atol=1e-4)

    def test_round_trip_through_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        write_example1_config(p)
        cfg = load_config(p)
        assert cfg.rho == 40
        assert cfg.ets.sigma == {(1, 0): 0.05, (2, 1): 0.05, (3, 1): 0.05}

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/path.yaml")

    def test_rho_zero_rejected(self):
        tree = yaml.safe_load(yaml.safe_dump(EXAMPLE1_TREE))
        tree["data"]["rho"] = 0
        with pytest.raises(ConfigError):
            parse_config(tree)

    def test_lambda_theta_rejected(self):
        tree = yaml.safe_load(yaml.safe_dump(EXAMPLE1_TREE))
        tree["ets"]["theta"] = 1.0
        tree["ets"]["lam"] = 0.5
        with pytest.raises(ConfigError):
            parse_config(tree)

    def test_agent_count_mismatch(self):
        tree = yaml.safe_load(yaml.safe_dump(EXAMPLE1_TREE))
        tree["agents"] = tree["agents"][:3]
        with pytest.raises(ConfigError):
            parse_config(tree)

    def test_explicit_matrices(self):
        tree = {
            "agents": [{"A": [[0.9]], "B": [[1.0]]}, {"A": [[0.8]], "B": [[1.0]]}],
            "discretize": False,
            "graph": {"adjacency": [[0, 0], [1, 0]]},
            "ets": {"sigma_0": 0.1, "sigma": {"1,0": 0.1}, "theta": 5.0, "lam": 0.2},
        }
        cfg = parse_config(tree)
        assert cfg.agents[1].A[0, 0] == 0.8


class TestCli:
    def test_exit_code_config_error(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("agents: []\n")
        assert main(["collect", "--config", str(bad)]) == 2

    def test_collect_writes_data_and_is_deterministic(self, tmp_path):
        cfgp = tmp_path / "c.yaml"
        write_example1_config(cfgp)
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        assert main(["collect", "--config", str(cfgp), "--out", str(out1)]) == 0
        assert main(["collect", "--config", str(cfgp), "--out", str(out2)]) == 0
        assert (out1 / "data.csv").read_bytes() == (out2 / "data.csv").read_bytes()
        prov = json.loads((out1 / "data.provenance.json").read_text())
        assert prov["rho"] == 40 and prov["w_bar"] == 0.001

    def test_collect_matches_library(self, tmp_path):
        from etconsensus import pipeline
        from etconsensus.data import load_dataset_csv

        cfgp = tmp_path / "c.yaml"
        write_example1_config(cfgp)
        out = tmp_path / "o"
        assert main(["collect", "--config", str(cfgp), "--out", str(out)]) == 0
        ds_cli = load_dataset_csv(out / "data.csv")
        ds_lib = pipeline.collect(example1_config())
        for a, b in zip(ds_cli.states, ds_lib.states):
            assert np.allclose(a, b)

    def test_report_from_trace(self, tmp_path):
        from etconsensus.ets import EtsParams
        from etconsensus.graph import build_graph
        from etconsensus.models import AgentModel, lift_controller
        from etconsensus.sim import SimConfig, run_closed_loop, save_trace_csv

        g = build_graph([[0, 0], [1, 0]])
        A = np.array([[0.9, 0.1], [0.0, 0.9]])
        B = np.array([[0.0], [0.1]])
        models = [AgentModel(A, B), AgentModel(A, B)]
        K = np.array([[-1.0, -1.0]])
        gains = lift_controller(K, {(1, 0): K}, g)
        ets = EtsParams(graph=g, sigma_0=0.1, sigma={(1, 0): 0.1},
                        theta=[5.0] * 2, lam=[0.2] * 2, omega=[np.eye(2)] * 2)
        trace = run_closed_loop(models, gains, ets,
                                SimConfig(horizon=30,
                                          initial_states=[np.zeros(2), np.ones(2)]))
        tp = tmp_path / "trace.csv"
        save_trace_csv(trace, tp)
        out = tmp_path / "rep"
        assert main(["report", "--trace", str(tp), "--out", str(out)]) == 0
        for name in ("states.svg", "eta.svg", "broadcasts.svg",
                     "consensus_error.svg", "summary.md"):
            assert (out / name).exists(), name
        svg = (out / "states.svg").read_text()
        assert svg.lstrip().startswith("<?xml")

    def test_report_one_step_trace(self, tmp_path):
        from etconsensus.ets import EtsParams
        from etconsensus.graph import build_graph
        from etconsensus.models import AgentModel, lift_controller
        from etconsensus.sim import SimConfig, run_closed_loop, save_trace_csv

        g = build_graph([[0, 0], [1, 0]])
        models = [AgentModel([[0.5]], [[1.0]]), AgentModel([[0.5]], [[1.0]])]
        K = np.array([[-0.1]])
        gains = lift_controller(K, {(1, 0): K}, g)
        ets = EtsParams(graph=g, sigma_0=0.1, sigma={(1, 0): 0.1},
                        theta=[5.0] * 2, lam=[0.2] * 2, omega=[np.eye(1)] * 2)
        trace = run_closed_loop(models, gains, ets,
                                SimConfig(horizon=1, initial_states=[np.zeros(1), np.ones(1)]))
        tp = tmp_path / "t.csv"
        save_trace_csv(trace, tp)
        assert main(["report", "--trace", str(tp), "--out", str(tmp_path / "r")]) == 0

    def test_report_malformed_trace(self, tmp_path):
        tp = tmp_path / "t.csv"
        tp.write_text("t,agent,x0\n")
        assert main(["report", "--trace", str(tp), "--out", str(tmp_path / "r")]) == 3

    def test_entry_point_installed(self):
        proc = subprocess.run([sys.executable, "-m", "etconsensus.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "repro-example1" in proc.stdout


class TestDesignFileRoundTrip:
    def test_save_load(self, tmp_path):
        from etconsensus import pipeline
        from etconsensus.graph import build_graph
        from etconsensus.models import lift_controller

        g = build_graph([[0, 0], [1, 0]])
        K = np.array([[1.0, 2.0]])
        gains = lift_controller(K, {(1, 0): K}, g)
        res = pipeline.DesignResult(
            method="data", feasible=True, gains=gains,
            omegas=[np.eye(2), 2 * np.eye(2)],
            margins={"h1_vs1": -1.0}, solver="CLARABEL",
            state_scale=np.array([2.0, 3.0]),
            certificate={"P": np.eye(4)})
        p = tmp_path / "design.json"
        pipeline.save_design(res, p)
        back = pipeline.load_design(p, g)
        assert back.feasible
        assert np.allclose(back.gains.K, gains.K)
        assert np.allclose(back.omegas[1], 2 * np.eye(2))
        assert np.allclose(back.state_scale, [2.0, 3.0])
        assert np.allclose(back.certificate["P"], np.eye(4))

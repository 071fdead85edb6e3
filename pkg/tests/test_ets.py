import numpy as np
import pytest

from etconsensus.errors import UninitializedBroadcastError
from etconsensus.ets import (
    EtsParams,
    check_trigger,
    compute_rho,
    update_eta,
    validate_params,
)
from etconsensus.graph import build_graph, example1_graph


def example1_params(omega=None, theta=5.0, lam=0.2, eta0=0.0, h=1):
    g = example1_graph()
    if omega is None:
        omega = [np.eye(2)] * 4
    return EtsParams(
        graph=g, sigma_0=0.02,
        sigma={(1, 0): 0.05, (2, 1): 0.05, (3, 1): 0.05},
        theta=[theta] * 4, lam=[lam] * 4, omega=omega, h=h,
        eta_0=[eta0] * 4)


class TestComputeRho:
    def test_leader_zero_broadcast(self):
        p = example1_params()
        rho = compute_rho(0, np.zeros(2), np.zeros(2), {}, p)
        assert rho == 0.0

    def test_leader_no_drift(self):
        p = example1_params()
        p.sigma_0 = 1.0
        xhat = np.array([1.0, 0.0])
        rho = compute_rho(0, xhat.copy(), xhat, {}, p)
        assert np.isclose(rho, 1.0)      # e_0 = 0, gain term = 1

    def test_follower_hand_arithmetic(self):
        g = build_graph([[0, 0], [1, 0]])
        p = EtsParams(graph=g, sigma_0=1.0, sigma={(1, 0): 1.0},
                      theta=[5.0, 5.0], lam=[0.2, 0.2], omega=[np.eye(2)] * 2)
        xhat_i = np.array([1.0, 0.0])
        xhat_j = np.array([0.0, 0.0])
        current = np.array([2.0, 0.0])
        rho = compute_rho(1, current, xhat_i, {0: xhat_j}, p)
        assert np.isclose(rho, 0.0)      # 1*1 - 1*1

    def test_uninitialized_broadcast(self):
        p = example1_params()
        with pytest.raises(UninitializedBroadcastError):
            compute_rho(0, np.zeros(2), None, {}, p)
        with pytest.raises(UninitializedBroadcastError):
            compute_rho(2, np.zeros(2), np.zeros(2), {1: None}, p)


class TestUpdateEta:
    def test_zero(self):
        assert update_eta(0.0, 0.0, 0.2) == 0.0

    def test_decay(self):
        assert np.isclose(update_eta(1.0, 0.0, 0.2), 0.8)

    def test_with_negative_rho(self):
        assert np.isclose(update_eta(1.0, -0.5, 0.2), 0.3)


class TestCheckTrigger:
    def test_fires(self):
        assert check_trigger(0.0, -1.0, 5.0)

    def test_nonnegative_rho_never_fires(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            eta = float(rng.uniform(0, 10))
            rho = float(rng.uniform(0, 10))
            assert not check_trigger(eta, rho, float(rng.uniform(0.1, 10)))

    def test_boundary_hand_arithmetic(self):
        assert not check_trigger(0.3, -0.05, 5.0)   # 0.3 - 0.25 = 0.05 >= 0


class TestValidateParams:
    def test_benchmark_values_ok(self):
        assert validate_params(example1_params()) == []

    def test_lambda_theta_violation(self):
        p = example1_params(theta=1.0, lam=0.5)     # 1 - 0.5 - 1 = -0.5
        issues = validate_params(p)
        assert any("1 - lambda - 1/theta" in v for v in issues)

    def test_lambda_zero(self):
        p = example1_params(lam=0.0)
        assert any("lambda must be positive" in v for v in validate_params(p))

    def test_indefinite_omega(self):
        p = example1_params(omega=[np.eye(2)] * 3 + [-np.eye(2)])
        assert any("positive definite" in v for v in validate_params(p))

    def test_sigma_off_graph(self):
        p = example1_params()
        p.sigma = dict(p.sigma)
        p.sigma[(1, 2)] = 0.1
        assert any("not a graph edge" in v for v in validate_params(p))

    def test_negative_eta0(self):
        p = example1_params(eta0=-1.0)
        assert any("eta(0)" in v for v in validate_params(p))

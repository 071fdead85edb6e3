import numpy as np
import pytest

from etconsensus.errors import DimensionMismatchError, ExtraGainError, MissingGainError
from etconsensus.graph import build_graph, example1_graph
from etconsensus.models import (
    AgentModel,
    block_index,
    discretize,
    lift_controller,
    lift_error_system,
    msd_matrices,
    split_gain,
)


def series_expm(A, kmax=20):
    """Truncated power-series oracle for the matrix exponential."""
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, kmax + 1):
        term = term @ A / k
        out = out + term
    return out


def example1_models(T_k=0.01):
    triples = [(1, 1, 2), (1, 1.1, 2), (1, 1.2, 2), (1, 0.8, 2)]
    return [AgentModel(*discretize(*msd_matrices(f, p, v), T_k)) for (f, p, v) in triples]


class TestDiscretize:
    def test_zero_dynamics(self):
        B = np.array([[1.0], [2.0]])
        Ad, Bd = discretize(np.zeros((2, 2)), B, 0.01)
        assert np.allclose(Ad, np.eye(2))
        assert np.allclose(Bd, 0.01 * B)

    def test_scalar_analytic(self):
        # a = b = 1, T = ln 2: A = 2 and B = integral of e^s = 1
        Ad, Bd = discretize([[1.0]], [[1.0]], np.log(2.0))
        assert np.isclose(Ad[0, 0], 2.0)
        assert np.isclose(Bd[0, 0], 1.0)

    def test_against_series_oracle(self):
        A, B = msd_matrices(1, 1, 2)
        Ad, _ = discretize(A, B, 0.01)
        assert np.abs(Ad - series_expm(A * 0.01)).max() < 1e-6

    def test_semigroup_property(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(1, 5))
            A = rng.normal(size=(n, n)) - 2 * np.eye(n)
            B = rng.normal(size=(n, 1))
            t1, t2 = rng.uniform(0.01, 0.5, size=2)
            A1, _ = discretize(A, B, t1)
            A2, _ = discretize(A, B, t2)
            A12, _ = discretize(A, B, t1 + t2)
            assert np.abs(A12 - A1 @ A2).max() < 1e-9

    def test_nonfinite_rejected(self):
        from etconsensus.errors import NonFiniteError
        with pytest.raises(NonFiniteError):
            discretize([[np.nan]], [[1.0]], 0.1)


class TestLiftErrorSystem:
    def test_homogeneous_coupling_vanishes(self):
        A = np.array([[0.9, 0.1], [0.0, 0.8]])
        B = np.array([[0.0], [1.0]])
        g = build_graph([[0, 0], [1, 0]])
        sys = lift_error_system([AgentModel(A, B), AgentModel(A, B)], g)
        assert np.allclose(sys.A[:2, 2:], 0)         # A_1 - A_0 = 0
        assert np.allclose(sys.A[:2, :2], A)
        assert np.allclose(sys.A[2:, 2:], A)

    def test_example1_block_structure(self):
        models = example1_models()
        sys = lift_error_system(models, example1_graph())
        assert sys.A.shape == (8, 8)
        assert np.allclose(sys.A[6:, :6], 0)         # zero lower-left
        for i in (1, 2, 3):
            b = i - 1
            assert np.allclose(sys.A[2 * b:2 * b + 2, 2 * b:2 * b + 2], models[i].A)
            assert np.allclose(sys.A[2 * b:2 * b + 2, 6:], models[i].A - models[0].A)
        assert np.allclose(sys.A[6:, 6:], models[0].A)
        assert sys.B.shape == (8, 4)
        assert np.allclose(sys.B[:2, 3:], -models[0].B)   # -B_0 stacked in last column
        assert np.allclose(sys.B[6:, 3:], models[0].B)

    def test_round_trip_recovery(self):
        rng = np.random.default_rng(5)
        A0, A1 = rng.normal(size=(2, 2, 2))
        B0, B1 = rng.normal(size=(2, 2, 1))
        g = build_graph([[0, 0], [1, 0]])
        sys = lift_error_system([AgentModel(A0, B0), AgentModel(A1, B1)], g)
        assert np.allclose(sys.A[:2, :2], A1)
        assert np.allclose(sys.A[:2, 2:] + A0, A1)
        assert np.allclose(sys.A[2:, 2:], A0)
        assert np.allclose(sys.B[:2, :1], B1)
        assert np.allclose(sys.B[:2, 1:], -B0)
        assert np.allclose(sys.B[2:, 1:], B0)

    def test_lifted_equals_per_agent_simulation(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            A0, A1, A2 = rng.normal(size=(3, 2, 2))
            for M in (A0, A1, A2):  # keep trajectories bounded so 1e-12 is meaningful
                M /= max(1.0, 1.1 * np.abs(np.linalg.eigvals(M)).max())
            models = [AgentModel(A0, np.zeros((2, 1))), AgentModel(A1, np.zeros((2, 1))),
                      AgentModel(A2, np.zeros((2, 1)))]
            g = build_graph([[0, 0, 0], [1, 0, 0], [1, 1, 0]])
            sys = lift_error_system(models, g)
            xs = [rng.normal(size=2) for _ in range(3)]
            eps = np.concatenate([xs[1] - xs[0], xs[2] - xs[0], xs[0]])
            for _ in range(50):
                xs = [m.A @ x for m, x in zip(models, xs)]
                eps = sys.A @ eps
                ref = np.concatenate([xs[1] - xs[0], xs[2] - xs[0], xs[0]])
                assert np.abs(eps - ref).max() < 1e-12

    def test_dimension_mismatch(self):
        g = build_graph([[0, 0], [1, 0]])
        with pytest.raises(DimensionMismatchError):
            lift_error_system([AgentModel(np.eye(2), np.ones((2, 1))),
                               AgentModel(np.eye(3), np.ones((3, 1)))], g)


class TestLiftController:
    def test_single_follower_leader_edge(self):
        g = build_graph([[0, 0], [1, 0]])
        K10 = np.array([[1.0, 2.0]])
        K0 = np.array([[3.0, 4.0]])
        gain = lift_controller(K0, {(1, 0): K10}, g)
        expected = np.block([[K10, np.zeros((1, 2))], [np.zeros((1, 2)), K0]])
        assert np.allclose(gain.K, expected)

    def test_example1_pattern(self):
        g = example1_graph()
        K10 = np.array([[1.0, 0.0]])
        K21 = np.array([[2.0, 0.0]])
        K31 = np.array([[3.0, 0.0]])
        K0 = np.array([[9.0, 9.0]])
        gain = lift_controller(K0, {(1, 0): K10, (2, 1): K21, (3, 1): K31}, g)
        K = gain.K
        assert np.allclose(K[0, 0:2], K10)
        assert np.allclose(K[1, 0:2], -K21)          # block (2, 1)
        assert np.allclose(K[1, 2:4], K21)
        assert np.allclose(K[2, 0:2], -K31)          # block (3, 1)
        assert np.allclose(K[2, 4:6], K31)
        assert np.allclose(K[:3, 6:], 0)             # last block-column zero
        assert np.allclose(K[3, 6:], K0)
        assert np.allclose(K[3, :6], 0)

    def test_zero_gains(self):
        g = example1_graph()
        z = np.zeros((1, 2))
        gain = lift_controller(z, {(1, 0): z, (2, 1): z, (3, 1): z}, g)
        assert np.allclose(gain.K, 0)

    def test_missing_and_extra(self):
        g = example1_graph()
        z = np.zeros((1, 2))
        with pytest.raises(MissingGainError):
            lift_controller(z, {(1, 0): z}, g)
        with pytest.raises(ExtraGainError):
            lift_controller(z, {(1, 0): z, (2, 1): z, (3, 1): z, (2, 3): z}, g)

    def test_split_round_trip(self):
        g = example1_graph()
        rng = np.random.default_rng(23)
        pair = {(1, 0): rng.normal(size=(1, 2)), (2, 1): rng.normal(size=(1, 2)),
                (3, 1): rng.normal(size=(1, 2))}
        K0 = rng.normal(size=(1, 2))
        gain = lift_controller(K0, pair, g)
        back = split_gain(gain.K, g, 1, 2)
        assert np.allclose(back.K, gain.K)
        for e in pair:
            assert np.allclose(back.pair_gains[e], pair[e])


def test_block_index():
    assert block_index(0, 3) == 3
    assert block_index(1, 3) == 0
    assert block_index(3, 3) == 2

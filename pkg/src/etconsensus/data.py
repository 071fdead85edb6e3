"""Noisy open-loop data and the quadratic consistency set of systems.

The collected samples satisfy x_i(T+1) = A_i x_i(T) + B_i u_i(T) + noise,
where the noise is injected through a lifted channel matrix so that the
stacked error sequence obeys eps(T+1) = A eps(T) + B u(T) + B_w w(T) with
||w(T)|| <= w_bar exactly.  When B_w is the structured lift of per-agent
channels D_i this reduces to per-agent injection D_i w_i(T); the benchmark
instead uses an unstructured B_w = 0.01 I on the full lifted state, which
the same mechanism supports.  D (the lifted channel) and B_w name the same
object throughout.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    NegativeWeightError,
    NonFiniteError,
)
from .models import AgentModel, Dims, block_index


@dataclass(frozen=True)
class DataSet:
    """Per-agent state/input sequences; states[i] has rho+1 rows, inputs[i] rho."""

    states: list[np.ndarray]   # agent i -> (rho+1, n)
    inputs: list[np.ndarray]   # agent i -> (rho, m)

    def __post_init__(self):
        rho = self.rho
        for i, (xs, us) in enumerate(zip(self.states, self.inputs)):
            if xs.shape[0] != rho + 1 or us.shape[0] != rho:
                raise DimensionMismatchError(f"agent {i}: inconsistent sequence lengths")

    @property
    def rho(self) -> int:
        return self.inputs[0].shape[0]

    @property
    def n_agents(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class DataMatrices:
    """Columns of stacked errors and inputs: E_plus[:, t] = eps(t+1), E[:, t] = eps(t)."""

    E_plus: np.ndarray
    E: np.ndarray
    U: np.ndarray


@dataclass(frozen=True)
class NoiseMultiplier:
    """Diagonal-form noise multiplier.

    Q_d = blockdiag(-diag(q_1..q_rho), (sum q_i) w_bar^2 I), with the q_i
    either fixed scalars or left free as design variables (free=True).
    """

    rho: int
    w_bar: float
    q: np.ndarray | None = None
    free: bool = field(default=False)
    tied: bool = field(default=False)  # one shared free scalar instead of rho

    def q_d(self, noise_dim: int, q: np.ndarray | None = None) -> np.ndarray:
        """Materialize Q_d for a lifted noise channel of width noise_dim."""
        qv = self.q if q is None else np.asarray(q, dtype=float)
        if qv is None:
            raise ValueError("free multiplier: pass q explicitly to materialize")
        top = -np.diag(qv)
        bottom = float(np.sum(qv)) * self.w_bar ** 2 * np.eye(noise_dim)
        out = np.zeros((self.rho + noise_dim, self.rho + noise_dim))
        out[:self.rho, :self.rho] = top
        out[self.rho:, self.rho:] = bottom
        return out


@dataclass(frozen=True)
class ThetaAB:
    """Consistency-set matrix, possibly affine in the free multiplier scalars.

    Theta = const + sum_i q_i * q_coeffs[i].  For a fixed multiplier the
    coefficients are folded into const and q_coeffs is None.
    """

    const: np.ndarray
    q_coeffs: list[np.ndarray] | None
    dims: Dims
    w_bar: float
    q_tied: bool = False   # one shared free scalar instead of one per column

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    @property
    def is_parametric(self) -> bool:
        return self.q_coeffs is not None

    def at_q(self, q) -> np.ndarray:
        if not self.is_parametric:
            raise ValueError("multiplier is fixed; Theta has no free scalars")
        q = np.asarray(q, dtype=float)
        out = self.const.copy()
        for qi, C in zip(q, self.q_coeffs):
            out += qi * C
        return out


def collect_trajectory(models: list[AgentModel], graph, rho: int, seed: int,
                       input_range=(-1.0, 1.0), w_bar: float = 0.0,
                       B_w: np.ndarray | None = None,
                       initial_states=None) -> DataSet:
    """Generate an open-loop data set, reproducible from the seed.

    Inputs are sampled uniformly per channel from input_range; the noise
    vector w(T) is uniform on the ball of radius w_bar and enters the
    per-agent updates through the lifted channel B_w (defaults to the
    structured lift of the agents' D_i).
    """
    from .models import lift_error_system

    if rho < 1:
        raise ValueError("rho must be >= 1")
    N = len(models) - 1
    n, m = models[0].n, models[0].m
    sys = lift_error_system(models, graph)
    if B_w is None:
        B_w = sys.D
    B_w = np.asarray(B_w, dtype=float)
    if B_w.shape[0] != (N + 1) * n:
        raise DimensionMismatchError("B_w row count must match the lifted state")

    rng = np.random.default_rng(seed)
    lo, hi = input_range
    if initial_states is None:
        initial_states = [np.zeros(n) for _ in range(N + 1)]
    xs = [np.zeros((rho + 1, n)) for _ in range(N + 1)]
    us = [np.zeros((rho, m)) for _ in range(N + 1)]
    for i in range(N + 1):
        xs[i][0] = np.asarray(initial_states[i], dtype=float)

    for T in range(rho):
        u_all = rng.uniform(lo, hi, size=(N + 1, m))
        w = _ball_sample(rng, B_w.shape[1], w_bar)
        nu = B_w @ w               # lifted error-equation noise
        nu_leader = nu[N * n:]
        for i in range(N + 1):
            us[i][T] = u_all[i]
            drift = models[i].A @ xs[i][T] + models[i].B @ u_all[i]
            if i == 0:
                drift = drift + nu_leader
            else:
                b = block_index(i, N)
                drift = drift + nu[b * n:(b + 1) * n] + nu_leader
            xs[i][T + 1] = drift
        if not all(np.isfinite(x[T + 1]).all() for x in xs):
            raise NonFiniteError(f"state diverged during collection at T={T}")
    return DataSet(states=xs, inputs=us)


def _ball_sample(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Uniform sample from the closed ball of the given radius."""
    if radius == 0.0:
        return np.zeros(dim)
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    r = radius * rng.uniform() ** (1.0 / dim)
    return r * v


def stack_errors(states_at_T: list[np.ndarray]) -> np.ndarray:
    """[x_1 - x_0, ..., x_N - x_0, x_0] for one time instant."""
    x0 = states_at_T[0]
    parts = [x - x0 for x in states_at_T[1:]] + [x0]
    return np.concatenate(parts)


def build_data_matrices(ds: DataSet) -> DataMatrices:
    """Arrange the samples into shifted column matrices."""
    rho = ds.rho
    N = ds.n_agents - 1
    n = ds.states[0].shape[1]
    m = ds.inputs[0].shape[1]
    E = np.zeros(((N + 1) * n, rho))
    E_plus = np.zeros(((N + 1) * n, rho))
    U = np.zeros(((N + 1) * m, rho))
    for t in range(rho):
        E[:, t] = stack_errors([ds.states[i][t] for i in range(N + 1)])
        E_plus[:, t] = stack_errors([ds.states[i][t + 1] for i in range(N + 1)])
        U[:, t] = np.concatenate([ds.inputs[i][t] for i in range(1, N + 1)]
                                 + [ds.inputs[0][t]])
    return DataMatrices(E_plus=E_plus, E=E, U=U)


def excitation_report(dm: DataMatrices, rel_tol: float = 1e-8) -> dict:
    """Row-rank diagnostic of [E; U]; a deficiency degenerates the design LMIs."""
    stacked = np.vstack([dm.E, dm.U])
    sv = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(sv > rel_tol * sv[0])) if sv[0] > 0 else 0
    full = rank == stacked.shape[0]
    if not full:
        warnings.warn(
            f"[E; U] row rank {rank} < {stacked.shape[0]}: data not exciting enough",
            RuntimeWarning, stacklevel=2)
    return {"rank": rank, "rows": stacked.shape[0], "full_row_rank": full,
            "singular_values": sv}


def build_noise_multiplier(rho: int, w_bar: float, q="ones") -> NoiseMultiplier:
    """Multiplier in diagonal form; q is a vector, "ones", "free" or "scalar".

    "scalar" ties all q_i to one free value, kept for conservatism
    comparisons; "free" leaves one scalar per data point.
    """
    if w_bar < 0:
        raise NegativeWeightError("w_bar must be nonnegative")
    if isinstance(q, str):
        if q == "free":
            return NoiseMultiplier(rho=rho, w_bar=w_bar, q=None, free=True)
        if q == "scalar":
            return NoiseMultiplier(rho=rho, w_bar=w_bar, q=None, free=True, tied=True)
        if q == "ones":
            return NoiseMultiplier(rho=rho, w_bar=w_bar, q=np.ones(rho))
        raise ValueError(f"unknown q policy {q!r}")
    qv = np.asarray(q, dtype=float)
    if qv.shape != (rho,):
        raise DimensionMismatchError(f"q must have length rho={rho}")
    if np.any(qv < 0):
        raise NegativeWeightError("q entries must be nonnegative")
    return NoiseMultiplier(rho=rho, w_bar=w_bar, q=qv)


def build_theta_AB(dm: DataMatrices, B_w: np.ndarray, nm: NoiseMultiplier,
                   dims: Dims) -> ThetaAB:
    """Triple product [ -E 0; -U 0; E+ B_w ] Q_d [.]^T, affine in free q."""
    B_w = np.asarray(B_w, dtype=float)
    nbar = dm.E.shape[0]
    rho = dm.E.shape[1]
    if dm.E_plus.shape != dm.E.shape or dm.U.shape[1] != rho:
        raise DimensionMismatchError("data matrices have inconsistent shapes")
    if B_w.shape[0] != nbar:
        raise DimensionMismatchError("B_w rows must match the lifted state")
    if rho != nm.rho:
        raise DimensionMismatchError("multiplier built for a different rho")

    F_top = np.vstack([-dm.E, -dm.U, dm.E_plus])       # data-point columns
    pad = np.vstack([np.zeros((nbar + dm.U.shape[0], B_w.shape[1])), B_w])
    noise_outer = nm.w_bar ** 2 * (pad @ pad.T)
    dim = F_top.shape[0]
    coeffs = []
    for t in range(rho):
        f = F_top[:, t:t + 1]
        C = noise_outer - f @ f.T
        coeffs.append(0.5 * (C + C.T))
    if nm.free:
        return ThetaAB(const=np.zeros((dim, dim)), q_coeffs=coeffs,
                       dims=dims, w_bar=nm.w_bar, q_tied=nm.tied)
    theta = np.zeros((dim, dim))
    for qi, C in zip(nm.q, coeffs):
        theta += qi * C
    return ThetaAB(const=0.5 * (theta + theta.T), q_coeffs=None,
                   dims=dims, w_bar=nm.w_bar)


def check_membership(A, B, theta: ThetaAB, tol: float = 1e-8):
    """Consistency test of a candidate pair with the data.

    Returns (member, margin) where margin is the minimum eigenvalue of
    [ [A B]^T; I ]^T Theta [ [A B]^T; I ] and membership means
    margin >= -tol.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    nbar = A.shape[0]
    AB = np.hstack([A, B])
    if theta.is_parametric:
        raise ValueError("membership needs a fixed multiplier; use at_q first")
    if theta.dim != AB.shape[1] + nbar:
        raise DimensionMismatchError("Theta dimension does not match the candidate")
    stack = np.vstack([AB.T, np.eye(nbar)])
    M = stack.T @ theta.const @ stack
    margin = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    return margin >= -tol, margin


def save_dataset_csv(ds: DataSet, path) -> None:
    """Columns: agent, T, x components, u components (blank at T=rho)."""
    n = ds.states[0].shape[1]
    m = ds.inputs[0].shape[1]
    header = ["agent", "T"] + [f"x{k}" for k in range(n)] + [f"u{k}" for k in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n_agents):
            for T in range(ds.rho + 1):
                row = [i, T] + [f"{v:.17g}" for v in ds.states[i][T]]
                if T < ds.rho:
                    row += [f"{v:.17g}" for v in ds.inputs[i][T]]
                else:
                    row += [""] * m
                w.writerow(row)


def load_dataset_csv(path) -> DataSet:
    path = Path(path)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("u"))
        rows = list(r)
    if not rows:
        raise DimensionMismatchError(f"{path}: no data rows")
    agents = sorted({int(row[0]) for row in rows})
    by_agent = {i: [] for i in agents}
    for row in rows:
        by_agent[int(row[0])].append(row)
    states, inputs = [], []
    for i in agents:
        recs = sorted(by_agent[i], key=lambda row: int(row[1]))
        xs = np.array([[float(v) for v in row[2:2 + n]] for row in recs])
        us = np.array([[float(v) for v in row[2 + n:2 + n + m]]
                       for row in recs if row[2 + n] != ""])
        states.append(xs)
        inputs.append(us)
    return DataSet(states=states, inputs=inputs)

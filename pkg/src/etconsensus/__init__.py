"""Event-triggered leader-following consensus: design and simulation."""

from .graph import DirectedGraph, build_graph, example1_graph, has_spanning_tree, neighbors
from .models import (
    AgentModel,
    BlockGain,
    Dims,
    LiftedSystem,
    discretize,
    lift_controller,
    lift_error_system,
    msd_matrices,
)
from .data import (
    DataMatrices,
    DataSet,
    NoiseMultiplier,
    ThetaAB,
    build_data_matrices,
    build_noise_multiplier,
    build_theta_AB,
    check_membership,
    collect_trajectory,
)
from .ets import EtsParams, EtsState, check_trigger, compute_rho, update_eta, validate_params
from .sim import (
    SimConfig,
    SimTrace,
    broadcast_counts,
    consensus_error,
    empirical_l2_gain,
    lyapunov_decrease_check,
    run_closed_loop,
)

__version__ = "0.1.0"

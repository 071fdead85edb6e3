"""Exception types shared across the package."""


class EtcError(Exception):
    """Base class for all library errors."""


class NonSquareError(EtcError):
    pass


class SelfLoopError(EtcError):
    pass


class NonBinaryEntryError(EtcError):
    pass


class IndexOutOfRangeError(EtcError):
    pass


class DimensionMismatchError(EtcError):
    pass


class NonFiniteError(EtcError):
    """Non-finite entries in an input, or divergence during a run."""


class MissingGainError(EtcError):
    pass


class ExtraGainError(EtcError):
    pass


class NegativeWeightError(EtcError):
    pass


class LambdaThetaViolationError(EtcError):
    """1 - lambda_i - 1/theta_i >= 0 failed for some agent."""


class SigmaPatternMismatchError(EtcError):
    """Trigger scalars sigma_ij do not match the graph's edge set."""


class DegenerateDataError(EtcError):
    """Data matrices are row-rank deficient; strict feasibility impossible."""


class MissingStageOneError(EtcError):
    """Disturbance-attenuation assembly needs a fixed G from a prior design."""


class NonPositiveGammaError(EtcError):
    pass


class SolverNumericalFailureError(EtcError):
    """Backend failed numerically (distinct from a clean infeasibility)."""


class SingularGError(EtcError):
    pass


class SingularRError(EtcError):
    pass


class ParamViolationError(EtcError):
    """Trigger parameters failed validation before a simulation run."""


class ZeroDisturbanceError(EtcError):
    pass


class UninitializedBroadcastError(EtcError):
    pass


class ConfigError(EtcError):
    """Malformed or inconsistent run configuration."""

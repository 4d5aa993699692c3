"""Exception types raised across the package."""


class ScenarioError(ValueError):
    """A scenario file could not be parsed or violates an invariant."""


class DegenerateGeometry(ValueError):
    """Anchors are collinear (or too few) to fix a planar position."""


class SingularInnovation(ArithmeticError):
    """The innovation covariance of a Kalman update is numerically singular."""


class InsufficientTransmitters(ValueError):
    pass


class ContractViolation(RuntimeError):
    """The caller broke a precondition of the radio state machine."""


class InfeasibleCalibration(ValueError):
    """No jamming parameter pair reproduces the requested fix pattern."""

    def __init__(self, message, nearest_miss=None):
        super().__init__(message)
        self.nearest_miss = nearest_miss

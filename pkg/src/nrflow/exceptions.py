"""Exception types raised across the package."""


class NRFlowError(Exception):
    """Base class for all package errors."""


class SingularAttitude(NRFlowError, ValueError):
    """Pitch angle too close to +-pi/2 for the Euler-rate transformation."""


class NonPDMass(NRFlowError, ValueError):
    """Mass/inertia matrix is not symmetric positive definite."""


class NonFiniteJacobian(NRFlowError, ArithmeticError):
    pass


class SingularJacobian(NRFlowError, ArithmeticError):
    pass


class NotLinearizable(NRFlowError, ArithmeticError):
    """Decoupling matrix of the feedback-linearized blimp is ill conditioned."""


class NoDescent(NRFlowError, RuntimeError):
    pass


class OutOfWindow(NRFlowError, ValueError):
    """Trajectory queried outside of [0, total_time]."""


class EmptyWindow(NRFlowError, ValueError):
    pass


class EpisodeDiverged(NRFlowError, RuntimeError):
    """Closed-loop state left the safety region.

    The partial log up to the divergence tick is attached as ``log``.
    """

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ConfigError(NRFlowError, ValueError):
    """Invalid configuration; the message names the offending key."""

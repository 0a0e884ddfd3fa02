"""Exception hierarchy shared by every module."""


class QueueControlError(Exception):
    """Base class for all errors raised by qtradeoff."""


class DomainError(QueueControlError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ResolutionError(QueueControlError):
    """A tabulated reward is too coarse for the requested finite-difference step."""


class EvaluationError(QueueControlError):
    """The reward function returned a non-finite value."""


class StructureError(QueueControlError):
    """An operation was handed a fluid solution of the wrong support structure."""


class NoMajorantError(QueueControlError):
    """No concave quadratic majorant exists (the tangent line touches F away from 1)."""


class InstabilityError(QueueControlError):
    """The policy does not induce a positive recurrent chain."""


class NoCertificateError(InstabilityError):
    """A general-tail policy never settles below rate 1, so no truncation bound exists."""


class InfeasibleParameterError(QueueControlError):
    """Closed-form policy parameters violate a rate bound such as lambda_max."""


class ConsistencyError(QueueControlError):
    """A stationary distribution was paired with a policy it was not computed from."""


class FitError(QueueControlError):
    """A scaling fit was requested on degenerate data."""


class ConfigError(QueueControlError):
    """The experiment configuration could not be parsed or validated."""

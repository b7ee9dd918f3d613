"""Exception types shared across the package."""


class RmprError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RmprError, ValueError):
    """A run configuration is invalid or inconsistent."""


class SimulationError(RmprError, RuntimeError):
    """The simulation reached an invalid state (bad event, unknown node)."""


class InvariantViolation(SimulationError):
    """A protocol invariant failed during a verified trial."""


class IncompleteTrialError(RmprError, RuntimeError):
    """A trial ran out of events or hit the horizon before completion.

    Carries the partial measurements so callers can still inspect them.
    """

    def __init__(self, message, record):
        super().__init__(message)
        self.record = record

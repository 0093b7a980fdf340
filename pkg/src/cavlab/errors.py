"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A system parameter violates its validity domain."""


class SingularSystemError(RuntimeError):
    """A linear steady-state solve failed its residual check."""


class StepSizeError(RuntimeError):
    """Fixed-step integrator rejected a step: local error above tolerance."""


class BudgetError(RuntimeError):
    """A requested Hilbert space exceeds the configured dimension budget."""

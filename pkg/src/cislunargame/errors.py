"""Exception taxonomy shared across the package.

Configuration problems, numerical failures, and I/O problems are kept as
distinct branches so the CLI can map them onto distinct exit codes.
"""


class ConfigError(ValueError):
    """A scenario/config value is missing, malformed, or inconsistent."""


class NumericalError(RuntimeError):
    """Base class for numerical failures during propagation or solving."""


class SingularStateError(NumericalError):
    """State entered the singularity guard radius of a primary body."""


class IntegrationError(NumericalError):
    """An ODE integration failed to reach the end of its span."""

    def __init__(self, message: str, t_fail: float | None = None):
        super().__init__(message)
        self.t_fail = t_fail


class CorrectionError(NumericalError):
    """Differential correction failed to converge."""


class OrbitStabilityError(NumericalError):
    """Monodromy spectrum lacks the expected real unstable eigenvalue."""


class ConjugatePointError(NumericalError):
    """Riccati solution escaped in finite time before reaching t0."""

    def __init__(self, message: str, t_fail: float | None = None):
        super().__init__(message)
        self.t_fail = t_fail


class SolverError(NumericalError):
    """Game solver could not produce a usable iterate."""

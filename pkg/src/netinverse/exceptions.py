"""Exception and warning classes raised across the package."""

from sklearn.exceptions import ConvergenceWarning


class NetworkError(ValueError):
    """Base class for invalid networks, data, or solver failures."""


class DimensionError(NetworkError):
    """Array shape does not conform to the graph."""


class GraphError(NetworkError):
    """Graph is not simple, not connected, or has a bad boundary."""


class IncompatibleDataError(NetworkError):
    """Boundary data violates a compatibility condition (e.g. nonzero net flux)."""


class SingularSystemError(NetworkError):
    """A linear system is singular or its solution misses the residual budget."""


class PerfectConductorError(NetworkError):
    """An infinite conductance is present where only finite values make sense."""


class SignViolationError(NetworkError):
    """Potential drop and current disagree in sign on some edge."""


class DegenerateDataError(NetworkError):
    """The recovered scale is nonpositive, e.g. for identically zero measurements."""


class InfeasibleDesignError(NetworkError):
    """No transition matrix realizes the prescribed net passages."""


class NotAdmissibleError(NetworkError):
    """A flow matrix violates one or more admissibility properties.

    ``violations`` lists one message per failed property.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DecodeError(NetworkError):
    """A ciphertext could not be decoded to an admissible flow."""


class NonConvergenceWarning(ConvergenceWarning):
    """Iteration cap reached before the stopping rule was met."""


class FormatError(NetworkError):
    """Malformed input file; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)

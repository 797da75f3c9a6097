"""
Exception hierarchy shared by every toolkit module
"""


class PolyaError(Exception):
    """Base class for all toolkit errors"""


class DomainError(PolyaError, ValueError):
    """An argument lies outside the domain of a formula"""


class ValidationError(PolyaError, ValueError):
    """A configuration object violates one or more invariants"""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__('; '.join(self.problems))


class ParseError(PolyaError, ValueError):
    """Malformed scenario config text"""

    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class _TrajectoryError(PolyaError):

    def __init__(self, message, trajectory_index=None, event_count=None):
        self.trajectory_index = trajectory_index
        self.event_count = event_count
        where = ''
        if trajectory_index is not None:
            where = f" (trajectory {trajectory_index}, after {event_count} events)"
        super().__init__(message + where)


class TenabilityBreach(_TrajectoryError):
    """A coordinate fell below the tenability guard"""


class RateUnderflow(_TrajectoryError):
    """The master clock rate (coordinate sum) is not positive"""


class EnsembleFailure(PolyaError):
    """One or more trajectories of an ensemble failed"""

    def __init__(self, failures):
        self.failures = list(failures)
        first = self.failures[0] if self.failures else None
        super().__init__(f"{len(self.failures)} trajectories failed; first: {first}")


class UnsupportedScheme(PolyaError):
    """The operation has no closed form for this scheme"""


class NoLimitSpec(UnsupportedScheme):
    """The scheme has no known limiting distribution"""


class InsufficientSamples(PolyaError):
    """Too few samples for a statistical comparison"""


class TruncationWarning(UserWarning):
    """Probability mass leaked past the truncation of a Kolmogorov system"""

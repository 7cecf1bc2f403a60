"""Exception hierarchy. Each error carries the CLI exit code it maps to."""


class AgmnError(Exception):
    exit_code: int = 1


class InputError(AgmnError):
    """Missing or invalid input file, option or configuration."""

    exit_code = 2


class DatasetError(AgmnError):
    """Dataset too small or badly partitioned for the requested run."""

    exit_code = 2


class StructuralError(AgmnError):
    """Inputs that disagree structurally (mask/skeleton mismatch and the like)."""


class EmptyGraphError(AgmnError):
    """Every segment was pruned away."""

    exit_code = 3


class DisconnectedGraphError(AgmnError):
    """The vascular tree falls apart into several components; needs a human."""

    exit_code = 4


class NumericalError(AgmnError):
    exit_code = 5

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class LabelingError(AgmnError):
    """Label bookkeeping violated (missing/duplicate LMA, duplicate sub-labels)."""


class DimensionMismatchError(AgmnError):
    pass


class FeatureLayoutError(AgmnError):
    pass


class StaleCacheError(AgmnError):
    """Backward called with activations from parameters that have since changed."""


class MatchSizeError(InputError):
    """Matching instance too large for exhaustive enumeration."""

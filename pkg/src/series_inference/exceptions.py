"""Exceptions raised by the library. Every exception derives from
:exc:`SeriesInferenceError`, the two intermediate classes decide how the command line
interface reports a failure, see :ref:`Exit Codes`.

- :exc:`InputError`: the caller passed something invalid (exit code ``2``)
- :exc:`NumericalError`: valid input but the computation broke down (exit code ``3``)
"""
from typing import Optional


class SeriesInferenceError(Exception):
    """Base class of all exceptions of this package."""


class InputError(SeriesInferenceError):
    """Invalid user input, wrong arguments or malformed files."""

    exit_code = 2


class NumericalError(SeriesInferenceError):
    """Raised whenever a computation cannot be carried out on otherwise valid input.

    :param message: Human readable description
    :param k: Number of series terms the failure is attributed to, if any
    """

    exit_code = 3

    def __init__(self, message: str, k: Optional[int] = None) -> None:
        self.k = k
        self.message = message
        if k is not None:
            message = f"{message} (K={k})"
        super().__init__(message)


class InvalidBasisSpecError(InputError):
    pass


class OutOfSupportError(InputError):
    """At least one evaluation point lies outside of the support of the basis."""


class InvalidCandidateSetError(InputError):
    pass


class InvalidCorrelationError(InputError):
    """A correlation matrix violates its invariants beyond the clipping tolerance."""


class DataFormatError(InputError):
    """Malformed input data.

    :param message: Description of the problem
    :param row: Line number inside the input file (header is line 1)
    """

    def __init__(self, message: str, row: Optional[int] = None) -> None:
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class MissingConfigError(InputError):
    """Requested setting is unknown."""


class SingularDesignError(NumericalError):
    """Design matrix is numerically rank deficient."""


class SaturatedPointError(NumericalError):
    """A leverage value equals one so the leave-one-out residual is undefined."""

    def __init__(self, message: str, k: Optional[int] = None, index: int = -1) -> None:
        self.index = index
        super().__init__(f"{message}, observation {index}", k)


class DegenerateVarianceError(NumericalError):
    pass


class AnnihilatorFloorError(NumericalError):
    """A diagonal entry of the annihilator matrix is below the configured floor."""

    def __init__(self, message: str, k: Optional[int] = None, index: int = -1) -> None:
        self.index = index
        super().__init__(f"{message}, observation {index}", k)


class BootstrapReplicationError(NumericalError):
    """A weighted least squares refit failed inside a bootstrap replication."""

    def __init__(self, message: str, k: Optional[int], replication: int) -> None:
        self.replication = replication
        super().__init__(f"{message} in bootstrap replication {replication}", k)

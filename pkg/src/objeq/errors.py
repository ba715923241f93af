"""Exception hierarchy shared by every module."""


class ObjeqError(Exception):
    """Base class for all library errors."""


class NotHermitian(ObjeqError, ValueError):
    pass


class NotPSD(ObjeqError, ValueError):
    pass


class InvalidState(ObjeqError, ValueError):
    """Raised when an operator fails the density-matrix checks (e.g. trace)."""


class NumericalFailure(ObjeqError, ArithmeticError):
    pass


class DimensionMismatch(ObjeqError, ValueError):
    pass


class DimensionOverflow(ObjeqError, ValueError):
    pass


class EmptyKeepSet(ObjeqError, ValueError):
    pass


class InvalidRank(ObjeqError, ValueError):
    pass


class InvalidDims(ObjeqError, ValueError):
    pass


class NonPositiveWindow(ObjeqError, ValueError):
    pass


class NotBlockDiagonal(ObjeqError, ValueError):
    pass


class NotDiagonal(ObjeqError, ValueError):
    pass


class IncompleteGrid(ObjeqError, ValueError):
    pass


class DegenerateAfterRetries(ObjeqError, RuntimeError):
    pass


class _WitnessError(ObjeqError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class EqualGapsDetected(_WitnessError, ValueError):
    """Two energy gaps coincide; ``witness`` holds the index quadruple."""


class DegenerateBranchStructure(_WitnessError, ValueError):
    """Cross-branch level coincidence with non-zero initial-state overlap.

    ``witness`` is ``(i, n, j, m, overlap)``: branch/level pairs and the norm
    of the offending block of the initial environment state.
    """


class ResonantEigenvalues(_WitnessError, ValueError):
    """``x_i * eps_m == x_j * eps_n`` for some distinct pairs; witness ``(i, j, m, n)``."""


class ConfigParseError(ObjeqError, ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field

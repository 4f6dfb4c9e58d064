"""Exception hierarchy.

Every error raised on purpose by the library derives from ``HofscError`` and
belongs to one of four classes that the command line maps to exit codes:
configuration (2), degeneracy (3), admissibility (4) and numerics (5).
"""


class HofscError(Exception):
    exit_code = 1


class ConfigError(HofscError, ValueError):
    exit_code = 2


class DegeneracyError(HofscError):
    """Two eigenvalues closer than the degeneracy tolerance."""

    exit_code = 3

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class GapError(DegeneracyError):
    """A spectral gap required by the computation is closed."""


class AdmissibilityError(HofscError):
    exit_code = 4


class DegenerateFormError(AdmissibilityError):
    """The corrected symplectic form is degenerate (1 + eps*b*Omega too small)."""


class BoundaryProximityError(AdmissibilityError):
    """A wavepacket or ensemble gets too close to the edge of an open box."""


class NumericError(HofscError, ArithmeticError):
    exit_code = 5


class NonFiniteStateError(NumericError):
    pass


class FilterLeakageError(NumericError):
    pass

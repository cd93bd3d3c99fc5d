"""Exception types shared across the package."""


class OpoNgError(Exception):
    """Base class for all package errors."""


class AboveThreshold(OpoNgError):
    """Pump amplitude at or above the oscillation threshold."""


class NonPositiveRate(OpoNgError):
    """A damping rate that must be positive is zero or negative."""


class NotTuned(OpoNgError):
    """Operation requires exactly tuned parameters (psi = psi0 = 0, real kappa0)."""


class ZeroPump(OpoNgError):
    """Operation undefined at zero excitation (entries carry 1/E factors)."""


class UnsupportedChannel(OpoNgError):
    """Channel does not participate in the requested coupling."""


class DegeneratePole(OpoNgError):
    """Two poles of a residue sum coincide; the simple-pole formulas break down."""


class QuadratureFailure(OpoNgError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class TrajectoryTooShort(OpoNgError):
    """Monte Carlo trajectory shorter than burn-in plus filter memory."""


class DegenerateVariance(OpoNgError):
    """Sample second moment is non-positive within its statistical error."""


class NonConvergence(OpoNgError):
    """Optimizer failed to converge within the iteration budget."""


class ParseError(OpoNgError):
    """Malformed input file; carries line (and column when known) information."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)


class EmptyDataset(OpoNgError):
    """Input file contained no usable records."""

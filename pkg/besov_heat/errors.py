"""Exception and warning types raised across the toolkit"""


class BesovHeatError(Exception):
    """Base class for every error raised by besov_heat"""


class WindowOutOfBandError(BesovHeatError, ValueError):
    """Dyadic window reaches beyond what the sampling grid can represent"""


class GridMismatchError(BesovHeatError, ValueError):
    """Field and filter bank (or two fields) live on different grids"""


class IndexOutOfWindowError(BesovHeatError, ValueError):
    """Requested dyadic index lies outside the bank's window"""


class RangeViolationError(BesovHeatError, ValueError):
    """Smoothness index outside the range where zero extension is bounded"""


class PreconditionError(BesovHeatError, ValueError):
    """Input data violates a precondition of an estimate"""


class ConfigError(BesovHeatError, ValueError):
    """Malformed run configuration"""


class BandError(BesovHeatError, ValueError):
    """Datum leaves the resolvable frequency band"""


class FieldFormatError(BesovHeatError, ValueError):
    """Binary field dump could not be parsed"""


class QuadratureError(BesovHeatError, RuntimeError):
    """Quadrature did not converge to the requested tolerance"""


class WindowTruncationWarning(UserWarning):
    """Part of a field's spectrum lies outside the summed window"""


class WindowFloorWarning(UserWarning):
    """Window floor sits below the grid's fundamental frequency"""


class ValidityRangeWarning(UserWarning):
    """Zero extension used at or beyond its validity range"""


class ResidualWarning(UserWarning):
    """Solver residual above the configured threshold"""

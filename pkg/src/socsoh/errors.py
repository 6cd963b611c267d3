"""Exception hierarchy shared by every module."""


class SocSohError(Exception):
    """Base class for all errors raised by this package."""


class FitError(SocSohError, ValueError):
    pass


class DomainError(SocSohError, ValueError):
    pass


class NoRootError(SocSohError, ValueError):
    pass


class NonPhysicalRootError(SocSohError, ValueError):
    pass


class SimulationError(SocSohError, RuntimeError):
    pass


class FilterError(SocSohError, ValueError):
    pass


class WindowError(SocSohError, ValueError):
    pass


class DegenerateGeometryError(SocSohError, ValueError):
    """Three-point ratio is non-positive or one: noise dominates the decay."""


class ImplausibleEstimateError(SocSohError, ValueError):
    pass


class RegressionError(SocSohError, ValueError):
    pass


class DivergenceError(SocSohError, RuntimeError):
    pass


class SingularGeometryError(SocSohError, ValueError):
    pass


class FlatCurveError(SocSohError, ValueError):
    pass


class MeasurementError(SocSohError, ValueError):
    pass


class FilterHealthError(SocSohError, RuntimeError):
    pass


class DetectionError(SocSohError, ValueError):
    pass


class ProtocolError(SocSohError, ValueError):
    pass


class InputError(SocSohError, ValueError):
    """Malformed CSV/JSON input; message carries row/field diagnostics."""

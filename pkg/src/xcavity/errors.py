"""Exception hierarchy shared by all solvers."""


class XCavityError(Exception):
    """Base class for every error raised by xcavity."""


class StackValidationError(XCavityError, ValueError):
    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer!r}: {message}"
        super().__init__(message)


class DispersionRangeError(XCavityError, ValueError):
    """Requested energy lies outside a tabulated range."""


class DegenerateInterfaceError(XCavityError, ZeroDivisionError):
    """k_i + k_j vanished at an interface."""


class GeometryError(XCavityError, ValueError):
    pass


class InputError(XCavityError, ValueError):
    pass


class DataQualityError(XCavityError, ValueError):
    pass


class SingularCavityError(XCavityError, ArithmeticError):
    def __init__(self, message, point=None):
        self.point = point
        super().__init__(message if point is None else f"{message} at {point}")


class ResonancePoleError(SingularCavityError):
    """The steady-state system matrix is numerically singular."""


class SearchError(XCavityError, RuntimeError):
    pass


class FitError(XCavityError, RuntimeError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class FitAmbiguityError(FitError):
    def __init__(self, message, candidates):
        self.candidates = list(candidates)
        super().__init__(f"{message}: candidates {self.candidates}")


class ConfigError(XCavityError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)


class ExpansionWarning(UserWarning):
    """The ultrathin-film expansion parameter exceeded its validity bound."""


class AccuracyWarning(UserWarning):
    pass

"""Exception hierarchy shared by all lyapgap modules."""


class LyapgapError(Exception):
    """Base class for every error raised by this package."""


class InputError(LyapgapError, ValueError):
    """Malformed or out-of-range arguments (non-finite entries, bad indices)."""


class GeometryError(LyapgapError, ValueError):
    """Subspaces that fail a required nesting relation."""


class ConditioningError(LyapgapError, ArithmeticError):
    """Matrix too close to singular for the requested operation."""


class SingularityError(ConditioningError):
    """Exactly (or numerically) zero determinant."""


class UnderflowError(LyapgapError, ArithmeticError):
    """An accumulated R-diagonal entry fell below the representable range."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalAbort(LyapgapError, ArithmeticError):
    """A product run hit a non-invertible factor or a non-finite value."""

    def __init__(self, message, step=None, trial=None):
        super().__init__(message)
        self.step = step
        self.trial = trial


class UnsupportedError(LyapgapError, ValueError):
    """Requested quantity is undefined for the given object."""


class ConfigError(LyapgapError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field

"""Exception and warning types shared across the package."""


class SteinerError(Exception):
    """Base class for all solver errors."""


class InputError(SteinerError):
    """User-supplied data is malformed or dimensionally inconsistent."""


class ConfigError(SteinerError):
    """A configuration object failed validation."""


class NumericalError(SteinerError):
    """A computation produced non-finite values.

    ``trace`` holds the partial descent trace accumulated before the
    failure, when one exists.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NoCriticalPointError(SteinerError):
    """No descent run reached a rest point.

    ``diagnostics`` holds the per-status counts of the attempted runs.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NonSmoothEvaluationWarning(RuntimeWarning):
    """A gradient was requested exactly at a kink of an unsmoothed norm.

    The zero vector (a valid subgradient at the kink, which is always the
    cone point of the norm) is returned in that case.
    """

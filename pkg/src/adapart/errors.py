"""Exception types raised across the package."""


class AdapartError(Exception):
    """Base class for package errors."""


class ArgumentError(AdapartError, ValueError):
    """An argument is outside the domain of an operation."""


class ResourceError(AdapartError):
    """A configured size cap would be exceeded."""


class DivergenceError(AdapartError, ArithmeticError):
    """A KL-type divergence is infinite (reference density vanishes where the other does not)."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ZeroMassError(AdapartError):
    """The prior assigns zero mass to the requested object."""


class SamplingError(AdapartError):
    """A rejection sampler's acceptance rate fell below its floor."""


class UnsupportedError(AdapartError):
    """The operation is not available for this input (e.g. dimension)."""


class IngestionError(AdapartError):
    """A data file could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ExperimentError(AdapartError):
    """A single (n, replicate) cell of an experiment failed."""

    def __init__(self, message, n=None, replicate=None, seed=None):
        super().__init__(message)
        self.n = n
        self.replicate = replicate
        self.seed = seed

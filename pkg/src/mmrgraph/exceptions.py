"""Exception hierarchy shared across the package."""


class MMRError(Exception):
    """Base class for every error raised by mmrgraph."""


class ShapeError(MMRError, ValueError):
    """Operand shapes do not conform to an operation's shape rule."""


class NonFiniteError(MMRError, FloatingPointError):
    """A primitive produced NaN or Inf."""


class UnknownOpError(MMRError, KeyError):
    pass


class TapeError(MMRError, RuntimeError):
    pass


class GradientCheckError(MMRError, RuntimeError):
    """The function under a gradient check is not deterministic."""


class FormatError(MMRError, ValueError):
    """Malformed MMRT tensor file or dataset manifest."""


class DimensionMismatchError(FormatError):
    pass


class ConfigError(MMRError, ValueError):
    """Invalid run configuration or variant specification."""


class DivergenceError(MMRError, RuntimeError):
    """Training produced a non-finite loss."""


class EmptySubsetError(MMRError, ValueError):
    pass

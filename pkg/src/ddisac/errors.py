"""Exception types raised by the library."""


class DdIsacError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(DdIsacError, ValueError):
    pass


class InvalidPathError(DdIsacError, ValueError):
    pass


class SingularChannelError(DdIsacError, ArithmeticError):
    """The effective channel ``H W`` (or a Gram built from it) is singular."""


class UnboundedCrbError(DdIsacError, ArithmeticError):
    """Fisher information is zero so the CRB is infinite."""


class IndefiniteMatrixError(DdIsacError, ValueError):
    """Dual variables lie outside the domain where ``mu*I - lambda*Lambda_s`` is PD."""


class NotHermitianError(DdIsacError, ValueError):
    pass


class GammaRangeError(DdIsacError, ValueError):
    """Requested Fisher threshold exceeds what the power budget can deliver."""

    def __init__(self, gamma_1, gamma_min, gamma_max):
        self.gamma_1 = gamma_1
        self.gamma_min = gamma_min
        self.gamma_max = gamma_max
        super().__init__(
            f"gamma_1={gamma_1:.6g} outside feasible range "
            f"[{gamma_min:.6g}, {gamma_max:.6g}]"
        )


class NumericalBreakdownError(DdIsacError, ArithmeticError):
    pass


class NonConvergenceError(DdIsacError, RuntimeError):
    """Iteration cap reached; ``state`` holds the last ellipsoid."""

    def __init__(self, message, state=None, history=None):
        super().__init__(message)
        self.state = state
        self.history = history


class ConfigError(DdIsacError, ValueError):
    pass

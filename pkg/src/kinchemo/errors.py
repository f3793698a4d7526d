"""Exception hierarchy shared by all solver modules."""


class KinchemoError(Exception):
    """Base class for every error raised by the package."""


class ModelEvaluationError(KinchemoError):
    """A model ingredient (g, lambda, F) produced a non-finite value."""


class ConfigurationError(KinchemoError):
    """A model or scenario configuration violates a structural requirement.

    Parameters
    ----------
    code : str
        Machine-readable error code, e.g. ``"KERNEL_NORMALIZATION"``.
    field : str
        Dotted path of the offending configuration field.
    reason : str
        Human-readable explanation.
    """

    def __init__(self, code, field, reason):
        self.code = code
        self.field = field
        self.reason = reason
        super().__init__(f"[{code}] {field}: {reason}")


class HistoryError(KinchemoError):
    """A signal history was queried outside the interval it covers."""


class QuadratureError(KinchemoError):
    """A quadrature error estimate exceeded the requested tolerance."""


class SupportOverflowError(KinchemoError):
    """Phase-space mass left the internal-state grid box.

    This means the a priori internal-state bound used to build the grid was
    violated, which points at a broken growth hypothesis.
    """

    def __init__(self, axis, side, mass, total):
        self.axis = axis
        self.side = side
        self.mass = mass
        self.total = total
        super().__init__(
            f"mass {mass:.3e} (of {total:.3e}) left the {axis} grid through its "
            f"{side} boundary"
        )


class ThinningBoundError(KinchemoError):
    """A turning rate exceeded the dominating rate used for thinning."""

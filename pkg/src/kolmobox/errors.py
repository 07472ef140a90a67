"""Exception types shared across the package."""


class KolmoboxError(Exception):
    """Base class for all errors raised by this package."""


class NegativeCoefficient(KolmoboxError):
    """A diffusion coefficient field has negative entries beyond tolerance."""


class DegenerateOmega(KolmoboxError):
    """omega is nonpositive somewhere but the unregularized k/omega is requested."""


class IncompatibleGrid(KolmoboxError):
    """Fields or grids that must match do not."""


class StepRejected(KolmoboxError):
    """A time step produced non-finite values; caller may retry with smaller dt."""


class PicardDiverged(KolmoboxError):
    """The damped Picard iteration did not reach tolerance within the budget."""


class InsufficientSamples(KolmoboxError):
    """A trajectory window holds too few samples for the requested evaluation."""


class NonpositiveSamples(KolmoboxError):
    """A log-fit was requested on data that is not strictly positive."""


class BadDelta(KolmoboxError):
    """Entropy exponent delta outside the open interval (0, 1)."""


class NonpositiveParameter(KolmoboxError):
    """A scaling parameter that must be positive is not."""


class NonpositiveSample(KolmoboxError):
    """A coefficient-invariance sample (omega, k) must be strictly positive."""


class ParseError(KolmoboxError):
    """Config text could not be parsed; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(KolmoboxError):
    """A config field violates a constraint."""

    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint

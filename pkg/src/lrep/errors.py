"""Exception hierarchy shared by the solver modules."""


class LrepError(Exception):
    """Base class for all errors raised by :mod:`lrep`."""


class ContractViolation(LrepError, ValueError):
    """Inputs do not satisfy an operation's preconditions (shapes, dims)."""


class IngestionError(LrepError):
    """A Matrix Market file could not be parsed.

    ``lineno`` is the 1-based line of the offending input, or ``None`` when the
    failure is not tied to a single line (e.g. missing entries at EOF).
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class NullspaceLeak(LrepError):
    """A projected block failed Cholesky; the search space touches N(K)."""


class DegenerateSpectrum(LrepError):
    """The projected problem has a (numerically) zero eigenvalue."""


class RankMismatch(LrepError):
    """Detected nullspace dimension differs from the caller's hint."""


class InvalidNullspace(LrepError):
    """Gram matrix of the nullspace candidates is not SPD."""


class InitializationFailure(LrepError):
    """Random start lost too many columns during biorthogonalization."""


class NotEnoughSamples(LrepError):
    """Too few residual samples for a convergence-rate regression."""

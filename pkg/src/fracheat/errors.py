"""Exception types shared across the toolkit."""


class FracheatError(Exception):
    """Base class for toolkit errors."""


class ConstructionError(FracheatError):
    """Invalid model or grid data at construction time."""


class ContractError(FracheatError):
    """An operation precondition was violated."""


class NumericalError(FracheatError):
    """A numerical procedure failed to meet its tolerance.

    Carries diagnostics (residual norms, tail estimates) in ``info``.
    """

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = dict(info)


class UsageError(FracheatError):
    """Bad CLI usage or configuration; message names the offending field."""


class TruncationWarning(UserWarning):
    """Spectral truncation makes the requested quantity untrustworthy."""

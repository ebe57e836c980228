"""Error types shared across the package."""


class ValidationError(ValueError):
    """A configuration or operation precondition was violated."""


class RunAbort(RuntimeError):
    """A simulation hit a non-recoverable numeric state (non-finite values)."""

"""Exception hierarchy shared by all modules."""


class HeavyTailError(Exception):
    """Base class for package errors."""


class InvalidDimensionError(HeavyTailError, ValueError):
    pass


class InvalidParameterError(HeavyTailError, ValueError):
    pass


class DegenerateInputError(HeavyTailError, ValueError):
    pass


class InsufficientDataError(HeavyTailError, ValueError):
    pass


class ModelValidationError(HeavyTailError, ValueError):
    """Raised when a LindbladModel fails one or more invariant checks.

    ``failures`` lists the names of the failed checks.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("model validation failed: " + "; ".join(self.failures))


class DecompositionError(HeavyTailError, RuntimeError):
    def __init__(self, message, fingerprint=None):
        self.fingerprint = fingerprint
        if fingerprint is not None:
            message = f"{message} (model {fingerprint})"
        super().__init__(message)


class InvalidStateError(HeavyTailError, ValueError):
    pass


class InsufficientSpanError(HeavyTailError, ValueError):
    pass


class UnmetDependencyError(HeavyTailError, RuntimeError):
    pass

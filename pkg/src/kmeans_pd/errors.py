class InputError(ValueError):
    """Raised for malformed or out-of-range inputs (CLI exit code 1)."""


class VerificationError(AssertionError):
    """Raised when a checked mathematical property fails (CLI exit code 2)."""

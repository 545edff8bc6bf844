"""Exception types shared across the package."""


class FormatError(ValueError):
    """A serialized file is malformed or does not match its declared format."""


class NumericalError(RuntimeError):
    """A numerical contract was violated (non-finite state, residue too large)."""

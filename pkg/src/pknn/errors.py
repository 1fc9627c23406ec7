"""Exception types shared across the package."""


class PknnError(Exception):
    """Base class for errors raised by :mod:`pknn`."""


class InputError(PknnError, ValueError):
    """Invalid arguments, inconsistent shapes or malformed input files."""


class NumericalError(PknnError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""

"""Exception types shared across csplab.

Each class carries the CLI exit code it maps to.
"""


class CSPLabError(Exception):
    exit_code = 3


class InputError(CSPLabError, ValueError):
    """Malformed or out-of-range input (bad dimensions, bad file, bad DSL)."""

    exit_code = 1


class CapacityError(CSPLabError):
    """A configured enumeration or budget cap would be exceeded."""

    exit_code = 2


class UnsupportedError(InputError):
    """The operation is not defined for these parameters (e.g. arity != 2)."""

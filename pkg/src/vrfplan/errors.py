"""Exception hierarchy shared by all vrfplan modules."""

from __future__ import annotations


class VrfError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(VrfError):
    """A user-supplied configuration value or file is invalid.

    The message always names the offending field so CLI users can fix
    their JSON without reading tracebacks.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"field {field!r}: {message}")


class InvalidParameterError(VrfError):
    """A function argument is outside its documented domain."""


class StructuralError(VrfError):
    """A Markov chain violates a structural prerequisite.

    Raised for reducible chains, absorbing partition blocks, or
    multi-state re-entry where a single-entry construction is required.
    """


class CapacityError(VrfError):
    """A requested computation would exceed a configured resource cap."""


class NumericalError(VrfError):
    """A numerical postcondition (residual, normalization) failed."""

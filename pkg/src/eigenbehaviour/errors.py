class EigenbehaviourError(Exception):
    """Base class for all package errors."""


class DataError(EigenbehaviourError, ValueError):
    """Input data violates a precondition (bad file, too few days, ...)."""


class HeaderError(DataError):
    pass


class UnknownRoomError(DataError):
    pass


class NumericalError(EigenbehaviourError, ArithmeticError):
    """A numerical routine produced an invalid result."""

class LogicError(Exception):
    """Base class for errors raised while solving."""


class InstantiationError(LogicError):
    pass


class PrologTypeError(LogicError):
    pass


class UnknownPredicateError(LogicError):
    pass


class ResourceError(LogicError):
    pass


class ModeError(LogicError):
    """A neural predicate was called in a mode it cannot answer."""

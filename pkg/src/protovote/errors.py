"""Exception hierarchy.

Everything raised on purpose derives from :class:`ProtovoteError`. Argument
problems also derive from :class:`ValueError` so callers that only know the
builtin still catch them.
"""


class ProtovoteError(Exception):
    pass


class ParseError(ProtovoteError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class AlignmentError(ProtovoteError, ValueError):
    pass


class DomainError(ProtovoteError, ValueError):
    pass


class DegenerateError(ProtovoteError, ValueError):
    pass


class EmptyResultError(ProtovoteError, ValueError):
    pass


class MissingClassError(ProtovoteError, ValueError):
    pass


class ConfigurationError(ProtovoteError, ValueError):
    pass


class InfeasibleError(ProtovoteError, ValueError):
    pass


class LeakageError(ProtovoteError, RuntimeError):
    """A fitted transform was asked to score rows it was fitted on."""

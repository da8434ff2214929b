"""Exception types shared across the package."""


class MtpdError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(MtpdError):
    """Malformed input document (syntax or shape), annotated with a position when known."""

    def __init__(self, message: str, *, line: int | None = None,
                 column: int | None = None, path: str | None = None):
        self.line = line
        self.column = column
        self.path = path
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        if path:
            where += f" in {path}"
        super().__init__(message + where)


class DuplicateIdError(MtpdError):
    """Two elements share an identifier that must be unique."""


class UnknownIdError(MtpdError):
    """A reference names an identifier that was never declared."""


class UnsupportedConstructError(MtpdError):
    """Source uses a construct outside the supported language subset."""

    def __init__(self, construct: str, *, line: int | None = None, column: int | None = None):
        self.construct = construct
        self.line = line
        self.column = column
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"unsupported construct: {construct}{where}")


class TokenOverflowError(MtpdError):
    """An encoding unit uses more distinct type names than there are tokens."""


class PlanError(MtpdError):
    """A corpus planting plan is invalid or infeasible."""

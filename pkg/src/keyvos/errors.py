"""Exception types raised across the package."""


class KeyvosError(Exception):
    """Base class for all package errors."""


class MalformedRle(KeyvosError, ValueError):
    pass


class DimensionMismatch(KeyvosError, ValueError):
    pass


class ParseError(KeyvosError, ValueError):
    """Raised when an input file does not follow its documented format."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class MissingFrame(ParseError):
    pass


class EmptyPool(KeyvosError, ValueError):
    pass


class ConfigError(KeyvosError, ValueError):
    pass


class InputError(KeyvosError, ValueError):
    pass


class SpecError(KeyvosError, ValueError):
    pass


class SizeLimit(KeyvosError, ValueError):
    pass

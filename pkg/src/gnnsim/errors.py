"""Exception types shared across the package."""


class GnnSimError(Exception):
    """Base class for all package errors."""


class ShapeError(GnnSimError):
    """Operand dimensions or index ranges are incompatible."""


class FormatError(GnnSimError):
    """A matrix violates its storage-format invariants."""


class ConfigError(GnnSimError):
    """A configuration value is out of its legal range."""


class ParseError(GnnSimError):
    """An input file could not be parsed.

    Carries the offending path and line number so CLI diagnostics can
    point at the exact location.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class CompileError(GnnSimError):
    """The model or graph cannot be lowered to an execution plan."""


class RuntimeOrderError(GnnSimError):
    """A runtime step ran before the data it depends on was produced."""


class ModelInconsistencyError(GnnSimError):
    """The analytical cost model contradicts itself (region check failed)."""

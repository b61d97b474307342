"""Exception types shared across the package."""


class PassbtError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(PassbtError, ValueError):
    """A numeric or structural argument violates its precondition."""


class GeometryError(PassbtError, ValueError):
    """Points do not satisfy the geometric constraints of an operation."""


class SingularityError(PassbtError, ValueError):
    """Coincident points would make a channel coefficient blow up."""


class OutOfExtentError(PassbtError, RuntimeError):
    """A phase-location search ran past the end of the waveguide.

    Attributes:
        antenna_index: 1-based index of the antenna whose placement failed,
            when known.
    """

    def __init__(self, message, antenna_index=None):
        super().__init__(message)
        self.antenna_index = antenna_index


class BudgetExceededError(PassbtError, RuntimeError):
    """An exhaustive evaluation would exceed the configured budget.

    Attributes:
        required: number of evaluations the run would have needed.
        budget: the configured maximum.
    """

    def __init__(self, message, required, budget):
        super().__init__(message)
        self.required = required
        self.budget = budget


class UnsupportedConfigurationError(PassbtError, ValueError):
    """The scenario combination is outside what the algorithms support."""


class ConfigError(PassbtError, ValueError):
    """A scenario file failed validation.

    Attributes:
        line: 1-based line number in the offending file, when known.
        key: the offending key, when known.
    """

    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key

"""
Custom exceptions for the application.

Each exception carries the process exit code the command line reports for it.
"""

EXIT_USAGE = 2
EXIT_PRECONDITION = 3


class AppException(Exception):
    """Base exception for all application errors."""
    def __init__(self, message: str, exit_code: int = EXIT_PRECONDITION):
        self.message = message
        self.exit_code = exit_code
        super().__init__(self.message)


class InvalidArgumentError(AppException, ValueError):
    """Raised when an operation's precondition on its arguments fails."""
    def __init__(self, message: str = "Invalid argument"):
        super().__init__(message, exit_code=EXIT_PRECONDITION)


class ResourceLimitError(AppException):
    """Raised when a computation would exceed a configured size guard."""
    def __init__(self, message: str = "Computation exceeds resource limit"):
        super().__init__(message, exit_code=EXIT_PRECONDITION)


class BoundViolationError(AppException, ArithmeticError):
    """Raised when an inequality verifier finds lhs above its bound."""
    def __init__(self, message: str = "Inequality violated"):
        super().__init__(message, exit_code=EXIT_PRECONDITION)


class DescriptorError(AppException, ValueError):
    """Raised when a distribution or estimator selector cannot be parsed."""
    def __init__(self, message: str = "Malformed descriptor"):
        super().__init__(message, exit_code=EXIT_USAGE)

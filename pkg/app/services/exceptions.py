"""Custom exceptions for the service layer.

This module defines domain-specific exceptions that map to HTTP status codes
and CLI exit codes:
- InvalidInputError → 400 Bad Request
- PlanLoadError → 400 Bad Request
- ScheduleInfeasibleError → 422 Unprocessable Entity
- AdversaryContractError → 422 Unprocessable Entity
- ResultWriteError → 500 Internal Server Error

The CLI exits with status 1 on any of them.
"""


class ServiceException(Exception):
    """Base exception for all service-layer errors."""

    def __init__(self, message: str, details: dict = None):
        """Initialize service exception.

        Args:
            message: Human-readable error message
            details: Additional error context (optional)
        """
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class InvalidInputError(ServiceException):
    """Raised when a precondition or input validation fails.

    Maps to HTTP 400 Bad Request.
    """

    pass


class ScheduleInfeasibleError(ServiceException):
    """Raised when a schedule closed form cannot be evaluated at the given parameters.

    Maps to HTTP 422 Unprocessable Entity.
    """

    pass


class AdversaryContractError(ServiceException):
    """Raised when an adversary breaks its contract (NaN delivery, oversized set).

    Maps to HTTP 422 Unprocessable Entity.
    """

    pass


class PlanLoadError(ServiceException):
    """Raised when an experiment plan cannot be parsed or is structurally invalid.

    Maps to HTTP 400 Bad Request.
    """

    pass


class ResultWriteError(ServiceException):
    """Raised when results cannot be persisted."""

    pass

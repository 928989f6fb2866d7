"""Error model and centralized error handling for pwlab experiments."""
import traceback
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

from loguru import logger


class ErrorSeverity(Enum):
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ErrorCategory(Enum):
    """Error categories for classification"""
    NUMERICAL_ERROR = "numerical_error"
    VALIDATION_ERROR = "validation_error"
    CONVERGENCE_ERROR = "convergence_error"
    RECOVERY_ERROR = "recovery_error"
    CONFIGURATION_ERROR = "configuration_error"
    IO_ERROR = "io_error"
    UNKNOWN_ERROR = "unknown_error"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class PwlabError(Exception):
    """Base exception class for pwlab errors"""

    default_category = ErrorCategory.UNKNOWN_ERROR
    default_severity = ErrorSeverity.HIGH

    def __init__(
        self,
        message: str,
        category: Optional[ErrorCategory] = None,
        severity: Optional[ErrorSeverity] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.category = category or self.default_category
        self.severity = severity or self.default_severity
        self.context = context or {}
        self.timestamp = _utc_now()
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "category": self.category.value,
            "severity": self.severity.value,
            "context": self.context,
            "timestamp": self.timestamp,
        }


# --- numerical ---------------------------------------------------------------

class NonFiniteResult(PwlabError):
    default_category = ErrorCategory.NUMERICAL_ERROR


class GridMismatch(PwlabError):
    default_category = ErrorCategory.VALIDATION_ERROR


class InvalidParams(PwlabError):
    default_category = ErrorCategory.VALIDATION_ERROR
    default_severity = ErrorSeverity.MEDIUM


class RadiusTooSmall(PwlabError):
    default_category = ErrorCategory.NUMERICAL_ERROR
    default_severity = ErrorSeverity.MEDIUM


class BracketFailure(PwlabError):
    default_category = ErrorCategory.CONVERGENCE_ERROR


class NonSimpleZero(PwlabError):
    default_category = ErrorCategory.CONVERGENCE_ERROR


class IndexOutOfRange(PwlabError):
    default_category = ErrorCategory.VALIDATION_ERROR
    default_severity = ErrorSeverity.MEDIUM


class GridTooCoarse(PwlabError):
    default_category = ErrorCategory.NUMERICAL_ERROR
    default_severity = ErrorSeverity.MEDIUM


# --- phase retrieval ---------------------------------------------------------

class LiftingIllConditioned(PwlabError):
    default_category = ErrorCategory.RECOVERY_ERROR


class RankDeficient(PwlabError):
    default_category = ErrorCategory.RECOVERY_ERROR


class AnchorVanishes(PwlabError):
    """A block anchor sample is (numerically) zero, so phases cannot be chained past it."""

    default_category = ErrorCategory.RECOVERY_ERROR
    default_severity = ErrorSeverity.MEDIUM

    def __init__(self, index: int, magnitude: float = 0.0, threshold: float = 0.0):
        self.index = index
        super().__init__(
            f"Anchor of block {index} vanishes (|v_1| = {magnitude:.3e} <= {threshold:.3e})",
            context={"index": index, "magnitude": magnitude, "threshold": threshold},
        )


class UScalingFailed(PwlabError):
    default_category = ErrorCategory.RECOVERY_ERROR
    default_severity = ErrorSeverity.MEDIUM


class UnsupportedK(PwlabError):
    default_category = ErrorCategory.VALIDATION_ERROR
    default_severity = ErrorSeverity.MEDIUM


# --- harness -----------------------------------------------------------------

class ConfigInvalid(PwlabError):
    default_category = ErrorCategory.CONFIGURATION_ERROR
    default_severity = ErrorSeverity.MEDIUM


class IoFailure(PwlabError):
    default_category = ErrorCategory.IO_ERROR


class ErrorHandler:
    """Centralized error handling and logging"""

    def __init__(self, keep_critical: int = 50):
        self.error_count = 0
        self.keep_critical = keep_critical
        self.critical_errors: List[Dict[str, Any]] = []

    def handle_error(
        self,
        error: Exception,
        category: Optional[ErrorCategory] = None,
        severity: Optional[ErrorSeverity] = None,
        context: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        """Handle and log errors with context"""
        self.error_count += 1

        if isinstance(error, PwlabError):
            error_data = error.to_dict()
            if context:
                error_data["context"] = {**error_data["context"], **context}
            severity = severity or error.severity
        else:
            severity = severity or ErrorSeverity.HIGH
            error_data = {
                "error": type(error).__name__,
                "message": str(error),
                "category": (category or ErrorCategory.UNKNOWN_ERROR).value,
                "severity": severity.value,
                "context": context or {},
                "timestamp": _utc_now(),
                "traceback": traceback.format_exc(),
            }

        if severity == ErrorSeverity.CRITICAL:
            logger.critical(f"Critical Error: {error_data}")
            self.critical_errors.append(error_data)
            self.critical_errors = self.critical_errors[-self.keep_critical:]
        elif severity == ErrorSeverity.HIGH:
            logger.error(f"High Severity Error: {error_data}")
        elif severity == ErrorSeverity.MEDIUM:
            logger.warning(f"Medium Severity Error: {error_data}")
        else:
            logger.info(f"Low Severity Error: {error_data}")

        return error_data

    def handle_experiment_error(self, error: Exception, experiment: str, context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Handle a failure raised while running a named experiment"""
        enriched_context = dict(context or {})
        enriched_context["experiment"] = experiment
        return self.handle_error(error, ErrorCategory.UNKNOWN_ERROR, None, enriched_context)

    def handle_io_error(self, error: Exception, path: str, context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Handle filesystem errors"""
        enriched_context = dict(context or {})
        enriched_context["path"] = path
        return self.handle_error(error, ErrorCategory.IO_ERROR, ErrorSeverity.HIGH, enriched_context)

    def handle_validation_error(self, message: str, field: str, value: Any) -> Dict[str, Any]:
        """Handle validation errors"""
        context = {"field": field, "value": str(value)}
        error = ConfigInvalid(message, context=context)
        return self.handle_error(error, ErrorCategory.CONFIGURATION_ERROR, ErrorSeverity.MEDIUM, context)

    def get_error_stats(self) -> Dict[str, Any]:
        """Get error statistics"""
        return {
            "total_errors": self.error_count,
            "critical_errors_count": len(self.critical_errors),
            "recent_critical_errors": self.critical_errors[-5:] if self.critical_errors else [],
        }


# Global error handler instance
error_handler = ErrorHandler()

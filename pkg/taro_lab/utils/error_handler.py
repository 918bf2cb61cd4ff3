"""
Error handling utilities

Handles:
- Exception hierarchy with CLI exit codes
- Mapping of arbitrary exceptions to exit codes
- Structured error reports for the command line
- Error logging with array-safe context
"""
import logging
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import numpy as np
from pydantic import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class TaroError(Exception):
    """Base class for all taro-lab errors"""
    exit_code = EXIT_FAILURE
    code = "TARO_ERROR"


class ContractError(TaroError):
    """API misuse, e.g. a non-scalar loss handed to backward"""
    code = "CONTRACT_VIOLATION"


class ConfigError(TaroError):
    """Invalid or inconsistent configuration"""
    exit_code = EXIT_CONFIG
    code = "CONFIG_ERROR"


class DimensionError(ConfigError):
    """Operand shapes do not conform"""
    code = "DIMENSION_MISMATCH"


class ShapeMismatchError(ConfigError):
    """Stored parameter shapes disagree with the configured architecture"""
    code = "SHAPE_MISMATCH"


class SelectionError(ConfigError):
    """Target mining impossible for the given batch"""
    code = "SELECTION_ERROR"


class DataError(TaroError):
    """Input data could not be read or understood"""
    exit_code = EXIT_DATA
    code = "DATA_ERROR"


class ParseError(DataError):
    """Malformed row in a data file"""
    code = "PARSE_ERROR"

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(DataError):
    """Data file does not match the expected layout"""
    code = "SCHEMA_ERROR"


class CheckpointError(DataError):
    """Checkpoint version mismatch or corrupt payload"""
    code = "CHECKPOINT_ERROR"


class NumericalError(TaroError):
    """Non-finite or degenerate numerics"""
    exit_code = EXIT_NUMERICAL
    code = "NUMERICAL_ERROR"


class NonFiniteError(NumericalError):
    """NaN or Inf reached a tensor"""
    code = "NON_FINITE"


class DegenerateVectorError(NumericalError):
    """Normalization of a (near) zero vector"""
    code = "DEGENERATE_VECTOR"


class AttackError(NumericalError):
    """Attack produced a non-finite gradient or left its epsilon ball"""
    code = "ATTACK_ERROR"


class DivergenceError(NumericalError):
    """Training loss became non-finite"""
    code = "DIVERGENCE"

    def __init__(self, message: str, epoch: Optional[int] = None, step: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the CLI exit code

    Args:
        exc: Raised exception

    Returns:
        0 never; 2 config, 3 data, 4 numerical, 1 anything else
    """
    if isinstance(exc, TaroError):
        return exc.exit_code
    if isinstance(exc, ValidationError):
        return EXIT_CONFIG
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return EXIT_DATA
    if isinstance(exc, OSError):
        return EXIT_DATA
    return EXIT_FAILURE


def create_error_report(
    code: str,
    message: str,
    details: Optional[Dict] = None
) -> Dict[str, Any]:
    """
    Create standardized error report

    Args:
        code: Error code
        message: Human-readable error message
        details: Additional error details

    Returns:
        Dictionary with error information
    """
    error_data = {
        "error": {
            "code": code,
            "message": message,
            "timestamp": datetime.now(timezone.utc).isoformat()
        }
    }

    if details:
        error_data["error"]["details"] = details

    return error_data


def report_for(exc: BaseException) -> Dict[str, Any]:
    """Build the error report for any exception"""
    if isinstance(exc, TaroError):
        details = {}
        for attr in ("line", "epoch", "step"):
            value = getattr(exc, attr, None)
            if value is not None:
                details[attr] = value
        return create_error_report(exc.code, str(exc), details or None)

    if isinstance(exc, ValidationError):
        errors = [
            {
                "field": ".".join(str(loc) for loc in error["loc"]),
                "message": error["msg"],
                "type": error["type"]
            }
            for error in exc.errors()
        ]
        return create_error_report(
            "VALIDATION_ERROR",
            "Configuration validation failed",
            {"errors": errors}
        )

    if isinstance(exc, OSError):
        return create_error_report("FILE_ERROR", str(exc))

    return create_error_report("INTERNAL_ERROR", str(exc))


class ErrorLogger:
    """
    Centralized error logging that never dumps tensors into log lines
    """

    @staticmethod
    def summarize(data: Any) -> Any:
        """
        Replace arrays in a context structure by short summaries

        Args:
            data: Context value (dict, list, array or scalar)

        Returns:
            Same structure with arrays summarized
        """
        if isinstance(data, np.ndarray):
            return f"<array shape={data.shape} dtype={data.dtype}>"

        if isinstance(data, dict):
            return {key: ErrorLogger.summarize(value) for key, value in data.items()}

        if isinstance(data, (list, tuple)):
            return [ErrorLogger.summarize(item) for item in data]

        return data

    @staticmethod
    def log_error(
        error: Exception,
        context: Optional[Dict] = None,
        severity: str = "ERROR",
        exc_info: bool = True
    ):
        """
        Log error with summarized context

        Args:
            error: Exception to log
            context: Additional context (arrays are summarized)
            severity: Log severity level
            exc_info: Attach the traceback
        """
        summarized = ErrorLogger.summarize(context) if context else {}

        log_level = getattr(logging, severity, logging.ERROR)
        logger.log(
            log_level,
            f"Error: {error}",
            extra={"context": summarized},
            exc_info=exc_info
        )

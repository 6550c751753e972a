"""
Centralized logging configuration for treeprobe.

Structured logging with consistent formatting across the library, the
experiment runner and the CLI. Results never go through the logger: they
are written to stdout or to files, while log lines go to stderr.

Usage:
    from src.utils.logging_config import setup_logging, get_logger

    setup_logging()
    logger = get_logger(__name__)
    logger.info("Trial finished", trial=3, queries_used=1234)
"""

import logging
import sys
import time
from datetime import datetime, timezone
from functools import wraps
from pathlib import Path
from typing import Optional

import structlog


def setup_logging(
    log_level: str = "WARNING",
    environment: str = "development",
    log_file: Optional[str] = None,
    service_name: str = "treeprobe",
) -> None:
    """
    Configure structured logging for the entire application.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        environment: Environment name; "production" renders JSON lines
        log_file: Optional log file path for file output
        service_name: Service name for log enrichment
    """
    level = getattr(logging, log_level.upper(), logging.WARNING)
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level, force=True)

    is_production = environment.lower() == "production"

    processors = [
        structlog.stdlib.filter_by_level,
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.CallsiteParameterAdder(
            parameters=[
                structlog.processors.CallsiteParameter.FILENAME,
                structlog.processors.CallsiteParameter.FUNC_NAME,
                structlog.processors.CallsiteParameter.LINENO,
            ]
        ),
        lambda _, __, event_dict: {
            **event_dict,
            "service": service_name,
            "environment": environment,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        },
    ]

    if is_production:
        processors.extend([
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(),
        ])
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=processors,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    if log_file:
        setup_file_logging(log_file, log_level)

    get_logger(__name__).debug(
        "Logging configured",
        log_level=log_level,
        environment=environment,
        log_file=log_file,
    )


def setup_file_logging(log_file: str, log_level: str) -> None:
    """Setup file-based logging with rotation."""
    from logging.handlers import RotatingFileHandler

    log_path = Path(log_file)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    file_handler = RotatingFileHandler(
        filename=log_file,
        maxBytes=10 * 1024 * 1024,  # 10MB
        backupCount=5,
        encoding="utf-8",
    )
    file_handler.setFormatter(logging.Formatter("%(message)s"))
    file_handler.setLevel(getattr(logging, log_level.upper(), logging.WARNING))
    logging.getLogger().addHandler(file_handler)


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """
    Get a structured logger for the specified module.

    Args:
        name: Module name (typically __name__)
    """
    return structlog.get_logger(name)


def log_performance(operation_name: str, **context):
    """
    Decorator for logging operation duration at debug level.

    Args:
        operation_name: Name of the operation being timed
        **context: Additional context to include in logs
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            logger = get_logger(func.__module__)
            start_time = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.error(
                    f"{operation_name} failed",
                    operation=operation_name,
                    duration_ms=round((time.perf_counter() - start_time) * 1000, 2),
                    error=str(e),
                    error_type=type(e).__name__,
                    **context,
                )
                raise
            logger.debug(
                f"{operation_name} completed",
                operation=operation_name,
                duration_ms=round((time.perf_counter() - start_time) * 1000, 2),
                **context,
            )
            return result

        return wrapper
    return decorator


class LogContext:
    """Context manager for adding structured context to logs."""

    def __init__(self, **context):
        self.context = context

    def __enter__(self):
        structlog.contextvars.bind_contextvars(**self.context)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        structlog.contextvars.unbind_contextvars(*self.context.keys())


def trial_context(trial: int, seed: int):
    """Context manager for per-trial logging."""
    return LogContext(trial=trial, seed=seed)


def procedure_context(procedure: str, n: int):
    """Context manager for one procedure run."""
    return LogContext(procedure=procedure, n=n)

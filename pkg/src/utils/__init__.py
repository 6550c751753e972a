"""
Utility modules for treeprobe: structured logging and log context helpers.
"""

from .logging_config import (
    setup_logging,
    get_logger,
    log_performance,
    LogContext,
    trial_context,
    procedure_context,
)

__all__ = [
    'setup_logging',
    'get_logger',
    'log_performance',
    'LogContext',
    'trial_context',
    'procedure_context',
]

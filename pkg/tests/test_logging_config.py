import pytest
import structlog

from src.config.settings import Settings, get_settings
from src.utils.logging_config import LogContext, log_performance, procedure_context, setup_logging, trial_context


def test_log_context_binds_and_unbinds():
    structlog.contextvars.clear_contextvars()
    with trial_context(3, 99):
        with procedure_context("leaves", 500):
            bound = structlog.contextvars.get_contextvars()
            assert bound == {"trial": 3, "seed": 99, "procedure": "leaves", "n": 500}
        assert "procedure" not in structlog.contextvars.get_contextvars()
    assert structlog.contextvars.get_contextvars() == {}


def test_log_context_unbinds_on_error():
    structlog.contextvars.clear_contextvars()
    with pytest.raises(KeyError):
        with LogContext(check="coverage"):
            raise KeyError("x")
    assert structlog.contextvars.get_contextvars() == {}


def test_log_performance_reraises():
    setup_logging(log_level="ERROR")

    @log_performance("recover")
    def broken():
        raise RuntimeError("anchor mismatch")

    @log_performance("count")
    def fine(x):
        return x + 1

    with pytest.raises(RuntimeError, match="anchor mismatch"):
        broken()
    assert fine(1) == 2
    assert fine.__name__ == "fine"


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("TREEPROBE_THREADS", "4")
    monkeypatch.setenv("TREEPROBE_WRITE_VERIFY", "false")
    monkeypatch.setenv("TREEPROBE_OUTPUT_DIR", "/tmp/results")
    settings = get_settings()
    assert settings.threads == 4
    assert settings.write_verify is False
    assert settings.output_dir == "/tmp/results"
    assert get_settings() is settings


def test_settings_defaults(monkeypatch):
    monkeypatch.delenv("TREEPROBE_LOG_LEVEL", raising=False)
    settings = Settings(_env_file=None)
    assert settings.log_level == "WARNING"
    assert settings.threads == 1
    assert settings.acceptance_trials == 200


def test_settings_reject_zero_threads(monkeypatch):
    monkeypatch.setenv("TREEPROBE_THREADS", "0")
    with pytest.raises(ValueError):
        Settings(_env_file=None)

"""Tests for log.py."""

import logging

import pytest

from screamkit.log import LOG_ENV_VAR, UTCFormatter, configure_logging, resolve_level


class TestResolveLevel:
    def test_defaults_to_info(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv(LOG_ENV_VAR, raising=False)
        assert resolve_level() == ("INFO", True)

    @pytest.mark.parametrize("value", ["debug", "DEBUG", " Debug "])
    def test_reads_environment_case_insensitively(
        self, monkeypatch: pytest.MonkeyPatch, value: str
    ) -> None:
        monkeypatch.setenv(LOG_ENV_VAR, value)
        assert resolve_level() == ("DEBUG", True)

    def test_argument_beats_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(LOG_ENV_VAR, "DEBUG")
        assert resolve_level("error") == ("ERROR", True)

    def test_unknown_level_falls_back(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(LOG_ENV_VAR, "chatty")
        assert resolve_level() == ("INFO", False)


class TestConfigureLogging:
    def test_installs_single_utc_handler(self) -> None:
        root = configure_logging("WARNING")
        configure_logging("WARNING")
        assert root is logging.getLogger()
        assert len(root.handlers) == 1
        assert isinstance(root.handlers[0].formatter, UTCFormatter)
        assert root.level == logging.WARNING

    def test_timestamps_are_utc(self) -> None:
        record = logging.LogRecord("x", logging.INFO, __file__, 1, "hello", None, None)
        record.created = 0.0
        formatted = UTCFormatter("[%(asctime)s] %(message)s").format(record)
        assert formatted == "[1970-01-01 00:00:00 UTC] hello"

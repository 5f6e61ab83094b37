"""Tests for logging configuration."""

from __future__ import annotations

import logging

from qrobust.logging import LOGGER_NAME, get_logger, setup_logging


class TestGetLogger:
    def test_root_logger(self):
        logger = get_logger()
        assert logger.name == LOGGER_NAME

    def test_named_logger(self):
        logger = get_logger("core.optimizers")
        assert logger.name == f"{LOGGER_NAME}.core.optimizers"

    def test_module_name_not_prefixed_twice(self):
        logger = get_logger("qrobust.core.engine")
        assert logger.name == "qrobust.core.engine"


class TestSetupLogging:
    def setup_method(self):
        logging.getLogger(LOGGER_NAME).handlers.clear()

    def teardown_method(self):
        logger = logging.getLogger(LOGGER_NAME)
        for handler in logger.handlers:
            handler.close()
        logger.handlers.clear()

    def test_setup_adds_handler(self):
        setup_logging(level=logging.DEBUG)
        assert len(logging.getLogger(LOGGER_NAME).handlers) == 1

    def test_setup_idempotent(self):
        setup_logging(level=logging.INFO)
        count = len(logging.getLogger(LOGGER_NAME).handlers)
        setup_logging(level=logging.INFO)
        assert len(logging.getLogger(LOGGER_NAME).handlers) == count

    def test_second_call_changes_level(self):
        setup_logging(level=logging.WARNING)
        setup_logging(level=logging.DEBUG)
        logger = logging.getLogger(LOGGER_NAME)
        assert logger.level == logging.DEBUG
        assert all(h.level == logging.DEBUG for h in logger.handlers)

    def test_file_handler_added_later(self, tmp_path):
        setup_logging(level=logging.WARNING)
        log_file = tmp_path / "train.log"
        setup_logging(level=logging.INFO, log_file=str(log_file))
        logger = logging.getLogger(LOGGER_NAME)
        file_handlers = [h for h in logger.handlers if isinstance(h, logging.FileHandler)]
        assert len(file_handlers) == 1

        get_logger("core.engine").info("generation 10: best 0.5")
        file_handlers[0].flush()
        assert "qrobust.core.engine: generation 10" in log_file.read_text(encoding="utf-8")

    def test_file_handler_keeps_console_quiet(self, tmp_path):
        setup_logging(level=logging.WARNING)
        setup_logging(log_file=str(tmp_path / "train.log"))
        logger = logging.getLogger(LOGGER_NAME)
        console = [h for h in logger.handlers if type(h) is logging.StreamHandler]
        files = [h for h in logger.handlers if isinstance(h, logging.FileHandler)]
        assert console[0].level == logging.WARNING
        assert files[0].level == logging.INFO
        assert logger.level == logging.INFO

    def test_default_console_level(self):
        setup_logging()
        assert logging.getLogger(LOGGER_NAME).handlers[0].level == logging.WARNING

"""
Tests for the package logging setup.
"""

import logging
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

from global_motion_tools.logger import (
    LOG_LEVEL_ENV_VAR,
    PACKAGE_LOGGER,
    get_logger,
    level_from_env,
    setup_logging,
)


class TestLogger(unittest.TestCase):

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp()
        self.package = logging.getLogger(PACKAGE_LOGGER)
        self.saved_level = self.package.level
        self.saved_handlers = list(self.package.handlers)

    def tearDown(self) -> None:
        for handler in list(self.package.handlers):
            if handler not in self.saved_handlers:
                self.package.removeHandler(handler)
                handler.close()
        self.package.setLevel(self.saved_level)
        shutil.rmtree(self.temp_dir)

    def test_module_loggers_share_the_package_handlers(self) -> None:
        """Module loggers have no handlers and propagate to the package logger."""
        logger = get_logger("global_motion_tools.trainer")
        self.assertEqual(logger.handlers, [])
        self.assertTrue(logger.propagate)
        self.assertIs(logger.parent, get_logger(PACKAGE_LOGGER))
        self.assertFalse(self.package.propagate)
        self.assertEqual(len(self.package.handlers), len(get_logger(PACKAGE_LOGGER).handlers))

    def test_foreign_names_are_nested(self) -> None:
        self.assertEqual(get_logger("scripts.sweep").name, "global_motion_tools.scripts.sweep")

    def test_level_from_env(self) -> None:
        with patch.dict(os.environ, {LOG_LEVEL_ENV_VAR: "debug"}):
            self.assertEqual(level_from_env(), logging.DEBUG)
        with patch.dict(os.environ, {LOG_LEVEL_ENV_VAR: "chatty"}):
            self.assertEqual(level_from_env(), logging.INFO)
        with patch.dict(os.environ, {LOG_LEVEL_ENV_VAR: ""}):
            self.assertEqual(level_from_env(logging.WARNING), logging.WARNING)

    def test_setup_logging_writes_a_file(self) -> None:
        """Lines from any module reach the file once, however often it is set up."""
        path = os.path.join(self.temp_dir, "run.log")
        setup_logging(logging.DEBUG, path)
        setup_logging(logging.DEBUG, path)
        get_logger("global_motion_tools.datagen").debug("windowed 3 sequences")
        for handler in self.package.handlers:
            handler.flush()
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        self.assertEqual(len(lines), 1)
        self.assertIn("global_motion_tools.datagen - DEBUG - windowed 3 sequences", lines[0])

    def test_setup_logging_sets_the_level(self) -> None:
        setup_logging(logging.WARNING)
        self.assertFalse(get_logger("global_motion_tools.net.gmr").isEnabledFor(logging.INFO))

"""Configuration management."""

import logging
import os
from typing import Any, Callable, Optional
from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _parse_or(raw: str, cast: Callable[[str], Any], fallback: Any) -> Any:
    try:
        return cast(raw)
    except ValueError:
        return fallback


class Config:
    """Ambient runtime configuration.

    Only process-level defaults live here (log level, worker count, output
    directory, default FL constant). Seeds and every numerical parameter of a
    run are passed explicitly so results do not depend on the environment.
    """

    def __init__(self):
        """Initialize configuration by loading .env file."""
        load_dotenv()

        self.log_level = os.getenv("PANEL_CORESET_LOG_LEVEL", "INFO").upper()
        self.raw_threads = os.getenv("PANEL_CORESET_THREADS", str(os.cpu_count() or 1))
        self.raw_fl_constant = os.getenv("PANEL_CORESET_FL_CONSTANT", "1.0")
        # Malformed numbers fall back here and are reported by validate()
        self.threads = _parse_or(self.raw_threads, int, os.cpu_count() or 1)
        self.fl_constant = _parse_or(self.raw_fl_constant, float, 1.0)
        self.data_dir = os.getenv("PANEL_CORESET_DATA_DIR", "data")

    def validate(self) -> bool:
        """Validate configured values.

        Returns:
            True if configuration is valid

        Raises:
            ConfigError: If a value is out of range
        """
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"PANEL_CORESET_LOG_LEVEL must be one of {LOG_LEVELS}, got {self.log_level!r}")
        for name, raw, cast in (
            ("PANEL_CORESET_THREADS", self.raw_threads, int),
            ("PANEL_CORESET_FL_CONSTANT", self.raw_fl_constant, float),
        ):
            try:
                cast(raw)
            except ValueError:
                raise ConfigError(f"{name} must be a number, got {raw!r}")
        if self.threads < 1:
            raise ConfigError(f"PANEL_CORESET_THREADS must be >= 1, got {self.threads}")
        if not self.fl_constant > 0:
            raise ConfigError(f"PANEL_CORESET_FL_CONSTANT must be positive, got {self.fl_constant}")

        return True

    def get_default(self, name: str) -> Optional[Any]:
        """Get a configured default by name.

        Args:
            name: Setting name (log_level, threads, fl_constant, data_dir)

        Returns:
            Configured value if known, None otherwise
        """
        defaults = {
            "log_level": self.log_level,
            "threads": self.threads,
            "fl_constant": self.fl_constant,
            "data_dir": self.data_dir,
        }
        return defaults.get(name.lower())


# Global config instance
config = Config()

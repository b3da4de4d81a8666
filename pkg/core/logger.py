"""
Logging module for sonicforge.

Every pipeline event goes to two sinks: a row in a processing-log CSV under
``<out>/logs/`` and a line on the ``sonicforge`` console logger (stderr).
Library modules under ``acoustics/`` log through child loggers of the same
console logger and never touch the CSV.
"""

import csv
import logging
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import pandas as pd

from core.config import OUTPUTS_DIR


CONSOLE_LOGGER_NAME = "sonicforge"
CONSOLE_FORMAT = "%(asctime)s | %(levelname)-8s | %(message)s"

# CSV status -> console level
STATUS_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "SUCCESS": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


def configure_console(level: str = "INFO") -> logging.Logger:
    """Configure the shared console logger; repeated calls only change the level."""
    console_logger = logging.getLogger(CONSOLE_LOGGER_NAME)
    console_logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    if not console_logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        console_logger.addHandler(handler)
    return console_logger


class ProcessingLogger:
    """Structured event log for agents and orchestrators.

    DEBUG events are written to the CSV only when the logger itself runs at
    DEBUG, so default runs keep one row per meaningful step.
    """

    LOG_FIELDS = [
        "timestamp", "agent", "action", "record_id",
        "status", "message", "details",
    ]

    def __init__(self, log_path: Optional[Path] = None, level: str = "INFO"):
        self.log_path = Path(log_path or OUTPUTS_DIR / "logs" / "processing_log.csv")
        self.level = STATUS_LEVELS.get(str(level).upper(), logging.INFO)
        self._lock = threading.Lock()
        self._ensure_log_file()
        self.console_logger = configure_console(level)

    def _ensure_log_file(self) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        if not self.log_path.exists():
            self.reset()

    def log(
        self,
        agent: str,
        action: str,
        status: str,
        message: str,
        record_id: str = "",
        details: str = "",
    ) -> None:
        """Record one event as a CSV row and a console line."""
        level = STATUS_LEVELS.get(status, logging.INFO)
        if level > logging.DEBUG or self.level <= logging.DEBUG:
            row = {
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "agent": agent,
                "action": action,
                "record_id": record_id,
                "status": status,
                "message": message,
                "details": details,
            }
            with self._lock, open(self.log_path, "a", newline="", encoding="utf-8") as f:
                csv.DictWriter(f, fieldnames=self.LOG_FIELDS).writerow(row)

        where = f" ({record_id})" if record_id else ""
        self.console_logger.log(level, "[%s] %s: %s%s", agent, action, message, where)

    def log_error(self, agent: str, action: str, message: str,
                  record_id: str = "", details: str = "") -> None:
        self.log(agent, action, "ERROR", message, record_id, details)

    def log_warning(self, agent: str, action: str, message: str,
                    record_id: str = "", details: str = "") -> None:
        self.log(agent, action, "WARNING", message, record_id, details)

    def log_success(self, agent: str, action: str, message: str,
                    record_id: str = "", details: str = "") -> None:
        self.log(agent, action, "SUCCESS", message, record_id, details)

    def read(self) -> pd.DataFrame:
        """Load the processing log written so far."""
        with self._lock:
            return pd.read_csv(self.log_path, dtype=str, keep_default_na=False)

    def reset(self) -> None:
        """Truncate the log to its header row."""
        with self._lock, open(self.log_path, "w", newline="", encoding="utf-8") as f:
            csv.DictWriter(f, fieldnames=self.LOG_FIELDS).writeheader()

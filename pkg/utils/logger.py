"""
Logging utility for denguecast
One named logger per module: console, rotating text and JSON-lines files, shared error log
"""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler, TimedRotatingFileHandler
from typing import Optional

LOG_DIR = os.getenv("LOG_DIR", "logs")
os.makedirs(LOG_DIR, exist_ok=True)

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

ROOT = "denguecast"
PLAIN_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
MAX_BYTES = 10 * 1024 * 1024


class ConsoleFormatter(logging.Formatter):
    """Level-coloured console lines"""

    RESET = "\x1b[0m"
    COLORS = {
        logging.DEBUG: "\x1b[38;21m",
        logging.INFO: "\x1b[34m",
        logging.WARNING: "\x1b[33m",
        logging.ERROR: "\x1b[31m",
        logging.CRITICAL: "\x1b[31;1m",
    }

    def __init__(self):
        super().__init__(PLAIN_FORMAT, datefmt=DATE_FORMAT)

    def format(self, record):
        line = super().format(record)
        color = self.COLORS.get(record.levelno)
        return f"{color}{line}{self.RESET}" if color else line


class JSONFormatter(logging.Formatter):
    """One JSON object per record, with the event helpers' extra_fields merged in"""

    def format(self, record):
        log_obj = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
            "pid": record.process,
        }
        if record.exc_info:
            log_obj["exception"] = self.formatException(record.exc_info)
        log_obj.update(getattr(record, "extra_fields", {}))
        return json.dumps(log_obj, default=str)


def _rotating(path: str, level: int, formatter: logging.Formatter) -> RotatingFileHandler:
    handler = RotatingFileHandler(path, maxBytes=MAX_BYTES, backupCount=5)
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logger(name: str, log_level: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger with consistent configuration

    Args:
        name: Logger name (usually module name)
        log_level: Override log level for this logger

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(f"{ROOT}.{name}")
    if logger.handlers:
        return logger

    level = getattr(logging, (log_level or LOG_LEVEL).upper())
    logger.setLevel(level)
    logger.propagate = False

    # stdout is left to command output
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    if os.getenv("ENV", "development") == "development":
        console_handler.setFormatter(ConsoleFormatter())
    else:
        console_handler.setFormatter(logging.Formatter(PLAIN_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(console_handler)

    logger.addHandler(_rotating(os.path.join(LOG_DIR, f"{name}.log"), level,
                                logging.Formatter(PLAIN_FORMAT, datefmt=DATE_FORMAT)))
    logger.addHandler(_rotating(os.path.join(LOG_DIR, f"{name}.json"), level, JSONFormatter()))

    error_handler = TimedRotatingFileHandler(os.path.join(LOG_DIR, "errors.log"), when="midnight",
                                             interval=1, backupCount=30)
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(logging.Formatter(f"{PLAIN_FORMAT}\n%(pathname)s:%(lineno)d"))
    logger.addHandler(error_handler)

    return logger


def log_fit_event(logger: logging.Logger, model: str, origin: str,
                  event_type: str, metrics: Optional[dict] = None):
    """Model fitting events: converged, failed, retried. Failures log at WARNING."""
    extra_fields = {"model": model, "origin": str(origin), "event_type": event_type}
    if metrics:
        extra_fields["metrics"] = metrics
    level = logging.WARNING if event_type.startswith("failed") else logging.INFO
    logger.log(level, f"Fit event: {event_type} ({model} @ {origin})", extra={"extra_fields": extra_fields})


def log_run_event(logger: logging.Logger, run_dir: str,
                  event_type: str, metadata: Optional[dict] = None):
    """Run-level events: artifacts written, audits, command phases"""
    extra_fields = {"run_dir": run_dir, "event_type": event_type, **(metadata or {})}
    logger.info(f"Run event: {event_type}", extra={"extra_fields": extra_fields})

"""
Logging setup shared by the CLI and the experiment service.
"""
import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Optional

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(settings: Optional[Dict[str, Any]] = None, level: Optional[str] = None) -> None:
    """
    Configure root logging from the ``logging`` section of the configuration.

    Args:
        settings: Dictionary with ``level``, ``format``, ``file``, ``max_size`` and ``backup_count``
        level: Optional level overriding the configured one
    """
    settings = settings or {}
    log_level = getattr(logging, str(level or settings.get("level", "INFO")).upper(), logging.INFO)
    formatter = logging.Formatter(settings.get("format", DEFAULT_FORMAT))

    root = logging.getLogger()
    root.setLevel(log_level)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    root.addHandler(stream_handler)

    log_file = settings.get("file")
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=int(settings.get("max_size", 10485760)),
            backupCount=int(settings.get("backup_count", 5)),
        )
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

"""
log.py

JSON-lines logging on standard error.

The level is read from the IRL_FORGE_LOG environment variable
(error | info | debug) unless passed explicitly.
"""

import json
import logging
import os
import sys
import time

ENV_VAR = "IRL_FORGE_LOG"
_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}
_RESERVED = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}

ROOT = "irl_forge"


class JsonLineFormatter(logging.Formatter):
    """Render a record as one JSON object; `extra=` fields are kept."""

    def format(self, record):
        payload = {
            "ts": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(record.created)),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _RESERVED and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=str)


def resolve_level(level=None):
    """
    Turn a level name (or None) into a logging level.

    Parameters
    ----------
    level : str or int, optional
        Explicit level. Falls back to $IRL_FORGE_LOG, then "error".

    Returns
    -------
    int
    """
    if isinstance(level, int):
        return level
    name = (level or os.environ.get(ENV_VAR, "error")).strip().lower()
    if name not in _LEVELS:
        print(f"⚠️ Unknown {ENV_VAR}='{name}', using 'error'.", file=sys.stderr)
        name = "error"
    return _LEVELS[name]


def configure_logging(level=None, stream=None):
    """
    Install the JSON-lines handler on the package logger.

    Calling it again replaces the previous handler instead of adding one.
    """
    logger = logging.getLogger(ROOT)
    for handler in list(logger.handlers):
        if getattr(handler, "_irl_forge", False):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    handler._irl_forge = True
    logger.addHandler(handler)
    logger.setLevel(resolve_level(level))
    logger.propagate = False
    return logger

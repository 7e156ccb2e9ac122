"""
In-memory log ring buffer.

Installs a logging.Handler that keeps the last MAX_RECORDS WARNING+ records
across all pyquorum loggers.  The CLI embeds them in the results document, so
records carry a sequence number rather than a wall-clock timestamp.
"""
from __future__ import annotations

import itertools
import logging
from collections import deque
from typing import TypedDict

MAX_RECORDS = 500


class LogRecord(TypedDict):
    seq:     int
    level:   str
    logger:  str
    message: str


_buffer: deque[LogRecord] = deque(maxlen=MAX_RECORDS)
_counter = itertools.count(1)


class _MemoryHandler(logging.Handler):
    def emit(self, record: logging.LogRecord) -> None:
        try:
            _buffer.append(LogRecord(
                seq=next(_counter),
                level=record.levelname,
                logger=record.name,
                message=self.format(record),
            ))
        except Exception:
            self.handleError(record)


_handler: _MemoryHandler | None = None


def install(level: int = logging.WARNING) -> None:
    """Attach the memory handler to the ``pyquorum`` logger.  Safe to call multiple times."""
    global _handler
    if _handler is not None:
        return
    _handler = _MemoryHandler(level=level)
    _handler.setFormatter(logging.Formatter("%(message)s"))
    logging.getLogger("pyquorum").addHandler(_handler)


def get_records() -> list[LogRecord]:
    """Return captured records newest-first."""
    return list(reversed(_buffer))


def clear() -> None:
    """Clear the buffer (e.g. between CLI commands in tests)."""
    global _counter
    _buffer.clear()
    _counter = itertools.count(1)

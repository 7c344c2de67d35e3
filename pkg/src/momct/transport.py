"""Message transports feeding the edge: an in-process queue and file replay.

Both yield decoded :class:`TrackletMessage` objects and are interchangeable
from the consumer's point of view.
"""

from __future__ import annotations

import logging
import queue
import sys
from pathlib import Path
from typing import Iterable, Iterator

from .model import DecodeError, TrackletMessage, decode_message, encode_message

log = logging.getLogger(__name__)

_CLOSED = object()


class QueueTransport:
    """Thread-safe in-process channel. Producers ``send``; one consumer iterates."""

    def __init__(self, maxsize: int = 0):
        self._q: queue.Queue = queue.Queue(maxsize)
        self.rejected = 0

    def send(self, msg: TrackletMessage) -> None:
        self._q.put(encode_message(msg))

    def send_raw(self, line: bytes) -> None:
        self._q.put(line)

    def close(self) -> None:
        self._q.put(_CLOSED)

    def __iter__(self) -> Iterator[TrackletMessage]:
        while True:
            item = self._q.get()
            if item is _CLOSED:
                return
            try:
                yield decode_message(item)
            except DecodeError as exc:
                self.rejected += 1
                log.warning("dropping undecodable message: %s", exc)


class FileTransport:
    """Replays a newline-delimited message file (``-`` reads stdin)."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self.rejected = 0

    def _lines(self) -> Iterator[bytes]:
        if self.path == "-":
            yield from sys.stdin.buffer
            return
        with open(self.path, "rb") as fh:
            yield from fh

    def __iter__(self) -> Iterator[TrackletMessage]:
        for lineno, line in enumerate(self._lines(), 1):
            if not line.strip():
                continue
            try:
                yield decode_message(line)
            except DecodeError as exc:
                self.rejected += 1
                log.warning("%s:%d: dropping undecodable message: %s", self.path, lineno, exc)


def write_messages(path: str | Path, messages: Iterable[TrackletMessage]) -> int:
    n = 0
    with open(path, "wb") as fh:
        for m in messages:
            fh.write(encode_message(m))
            n += 1
    return n

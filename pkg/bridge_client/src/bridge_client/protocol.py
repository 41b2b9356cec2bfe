"""Wire format of the bridge: length-prefixed JSON frames.

Each frame is a 4-byte big-endian payload length followed by that many
bytes of UTF-8 JSON. Every message is an object with ``"v": 1``; the
``kind`` field is one of hello, request, response, error, bye. This module
is written against the published wire description, not against the
orchestrator's sources, so the two sides stay honest about the format.
"""

from __future__ import annotations

import json
import struct

PROTOCOL = "artisim-bridge/1"
VERSION = 1
MAX_FRAME = 64 * 1024 * 1024

_HEADER = struct.Struct("!I")


class FrameError(Exception):
    """The byte stream does not contain a well-formed frame."""


def pack(message: dict) -> bytes:
    """Header plus payload for one message, ready to write."""
    payload = json.dumps(message, sort_keys=True,
                         separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise FrameError(f"payload of {len(payload)} bytes exceeds the cap")
    return _HEADER.pack(len(payload)) + payload


def write_frame(stream, message: dict):
    stream.write(pack(message))
    stream.flush()


def _read_exact(stream, n: int) -> bytes | None:
    """n bytes, short bytes on a mid-read EOF, None on EOF at a boundary."""
    parts = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            return None if got == 0 else b"".join(parts)
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)


def read_frame(stream) -> dict | None:
    """Next message, or None when the peer closed between frames."""
    header = _read_exact(stream, _HEADER.size)
    if header is None:
        return None
    if len(header) < _HEADER.size:
        raise FrameError("stream ended inside a frame header")
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise FrameError(f"declared length {length} exceeds the cap")
    payload = _read_exact(stream, length)
    if payload is None or len(payload) < length:
        raise FrameError("stream ended inside a frame payload")
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"payload is not JSON: {exc}") from exc
    if not isinstance(message, dict) or message.get("v") != VERSION:
        raise FrameError(f"not a v{VERSION} message: {message!r}")
    return message

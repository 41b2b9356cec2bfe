"""Framing: length prefix, version gate, truncation handling."""

import io
import json
import random
import struct

import pytest

from bridge_client.protocol import (
    MAX_FRAME,
    VERSION,
    FrameError,
    pack,
    read_frame,
    write_frame,
)


def test_round_trip():
    message = {"v": VERSION, "kind": "request", "id": 3, "prompt": "where?"}
    stream = io.BytesIO(pack(message))
    assert read_frame(stream) == message
    assert read_frame(stream) is None


def test_many_frames_in_order():
    rng = random.Random(7)
    sent = [{"v": VERSION, "kind": "response", "id": i,
             "text": "x" * rng.randrange(0, 200)} for i in range(40)]
    out = io.BytesIO()
    for message in sent:
        write_frame(out, message)
    stream = io.BytesIO(out.getvalue())
    got = [read_frame(stream) for _ in sent]
    assert got == sent
    assert read_frame(stream) is None


def test_header_is_big_endian_length():
    frame = pack({"v": VERSION})
    body = frame[4:]
    assert json.loads(body) == {"v": VERSION}
    assert frame[:4] == struct.pack("!I", len(body))


def test_truncated_header():
    stream = io.BytesIO(b"\x00\x00")
    with pytest.raises(FrameError, match="header"):
        read_frame(stream)


def test_truncated_payload():
    frame = pack({"v": VERSION, "kind": "bye"})
    stream = io.BytesIO(frame[:-3])
    with pytest.raises(FrameError, match="payload"):
        read_frame(stream)


def test_wrong_version_rejected():
    payload = json.dumps({"v": 0, "kind": "hello"}).encode()
    stream = io.BytesIO(struct.pack("!I", len(payload)) + payload)
    with pytest.raises(FrameError, match="v1"):
        read_frame(stream)


def test_non_object_rejected():
    payload = json.dumps([1, 2, 3]).encode()
    stream = io.BytesIO(struct.pack("!I", len(payload)) + payload)
    with pytest.raises(FrameError):
        read_frame(stream)


def test_non_json_rejected():
    payload = b"{not json"
    stream = io.BytesIO(struct.pack("!I", len(payload)) + payload)
    with pytest.raises(FrameError, match="not JSON"):
        read_frame(stream)


def test_declared_oversize_rejected_without_reading_body():
    stream = io.BytesIO(struct.pack("!I", MAX_FRAME + 1))
    with pytest.raises(FrameError, match="cap"):
        read_frame(stream)


def test_pack_refuses_oversize_payload():
    with pytest.raises(FrameError, match="cap"):
        pack({"v": VERSION, "text": "x" * (MAX_FRAME + 1)})

"""The serve loop: one conversation with an orchestrator.

The orchestrator speaks first with a hello naming its role; the client
replies with its own hello and then answers requests until a bye or end of
stream. A rulebook exception becomes an error frame and the conversation
continues; a ClientAbort closes the connection with nothing on the wire,
which is the point of it.
"""

from __future__ import annotations

import socket

from .protocol import VERSION, FrameError, read_frame, write_frame
from .rulebook import ClientAbort, Rulebook


def serve(rulebook: Rulebook, reader, writer):
    """Run one conversation over a byte-stream pair."""
    first = read_frame(reader)
    if first is None:
        return
    if first.get("kind") != "hello":
        raise FrameError(f"expected hello, got {first!r}")
    write_frame(writer, {"v": VERSION, "kind": "hello", "role": "policy",
                         "name": type(rulebook).__name__})
    while True:
        message = read_frame(reader)
        if message is None or message.get("kind") == "bye":
            return
        if message.get("kind") != "request":
            raise FrameError(f"expected request, got {message!r}")
        try:
            text = rulebook.answer(message)
        except ClientAbort:
            raise
        except Exception as exc:
            write_frame(writer, {"v": VERSION, "kind": "error",
                                 "id": message.get("id"),
                                 "message": str(exc)})
            continue
        write_frame(writer, {"v": VERSION, "kind": "response",
                             "id": message.get("id"), "text": text})


def serve_stdio(rulebook: Rulebook):
    import sys
    serve(rulebook, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(rulebook: Rulebook, host: str, port: int, max_sessions=None,
              on_bound=None) -> int:
    """Listen and serve conversations one at a time; returns the bound port.

    on_bound, when given, is called with the port once listening starts
    (port 0 binds an ephemeral one). A conversation that dies, by fault
    injection or a misbehaving peer, does not take the server down.
    """
    server = socket.create_server((host, port))
    bound = server.getsockname()[1]
    if on_bound is not None:
        on_bound(bound)
    served = 0
    try:
        while max_sessions is None or served < max_sessions:
            conn, _ = server.accept()
            with conn:
                stream = conn.makefile("rwb")
                try:
                    serve(rulebook, stream, stream)
                except (ClientAbort, FrameError, OSError):
                    pass
                finally:
                    stream.close()
            served += 1
    finally:
        server.close()
    return bound

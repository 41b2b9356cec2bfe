"""Standalone peer for the artisim bridge protocol.

The orchestrator exports each observation as a depth/mask PNG pair with a
JSON sidecar and asks questions over length-prefixed JSON frames; this
package parses the files, answers with a pluggable rulebook, and speaks
the wire format, all without importing the simulator. Serve a peer from
the command line::

    artisim-bridge-client --stdio
    artisim-bridge-client --listen 127.0.0.1:0 --rulebook echo:nope

or embed it::

    from bridge_client import MinDepthRulebook, serve_tcp
    serve_tcp(MinDepthRulebook(), "127.0.0.1", 4321, max_sessions=1)
"""

from .client import serve, serve_stdio, serve_tcp
from .observations import SCHEMA, Frame, load_frame
from .protocol import (
    MAX_FRAME,
    PROTOCOL,
    VERSION,
    FrameError,
    pack,
    read_frame,
    write_frame,
)
from .rulebook import (
    ClientAbort,
    DieAfterRulebook,
    FixedEchoRulebook,
    MinDepthRulebook,
    ModelHookRulebook,
    Rulebook,
    decode_bins,
    encode_bins,
    make_rulebook,
)

__version__ = "0.1.0"

__all__ = [
    "MAX_FRAME",
    "PROTOCOL",
    "SCHEMA",
    "VERSION",
    "ClientAbort",
    "DieAfterRulebook",
    "FixedEchoRulebook",
    "Frame",
    "FrameError",
    "MinDepthRulebook",
    "ModelHookRulebook",
    "Rulebook",
    "decode_bins",
    "encode_bins",
    "load_frame",
    "make_rulebook",
    "pack",
    "read_frame",
    "serve",
    "serve_stdio",
    "serve_tcp",
    "write_frame",
]

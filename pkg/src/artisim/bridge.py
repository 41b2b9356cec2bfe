"""Bridge protocol: run a session against a policy living in another process.

Framing is a 4-byte big-endian length prefix followed by UTF-8 JSON, over
either a spawned subprocess's standard streams or a TCP socket. Messages are
versioned; kinds are hello, request, response, error, bye. Observations are
exported to files and passed by reference (dir + stem), optionally inlined
base-64 for peers without a shared filesystem.

Answers come back as free text. The orchestrator side parses them with a
fixed grammar: the first "(int, int)" in the text is the pixel, the first
"(int, int, int)" is the direction-bin triple. The two patterns cannot match
the same span, since a pair must close after its second integer. One re-ask
is allowed before a parse failure aborts the session.
"""

from __future__ import annotations

import base64
import json
import re
import socket
import struct
import subprocess
from pathlib import Path

import numpy as np

from .errors import ParseFailure, ProtocolViolation
from .policy import (
    DirectionBins,
    PolicyBase,
    axis_implied_direction,
    decode_direction,
    encode_direction,
)
from .feedback import MotionClass
from .interaction import Action
from .scene import export_observation, load_exported_observation

PROTOCOL = "artisim-bridge/1"
VERSION = 1
EXPORT_SIZE = (336, 336)
MAX_FRAME = 64 * 1024 * 1024

PIXEL_RE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")
TRIPLE_RE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")


# -- framing --


def write_message(stream, message: dict):
    payload = json.dumps(message, sort_keys=True,
                         separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise ProtocolViolation(f"frame of {len(payload)} bytes is too large")
    stream.write(struct.pack("!I", len(payload)) + payload)
    stream.flush()


def _read_exact(stream, n: int):
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            return None if got == 0 else b"".join(chunks)
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_message(stream):
    """Next message, or None on a clean end of stream."""
    header = _read_exact(stream, 4)
    if header is None:
        return None
    if len(header) < 4:
        raise ProtocolViolation("truncated frame header")
    (length,) = struct.unpack("!I", header)
    if length > MAX_FRAME:
        raise ProtocolViolation(f"declared frame of {length} bytes is too large")
    payload = _read_exact(stream, length)
    if payload is None or len(payload) < length:
        raise ProtocolViolation("truncated frame payload")
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"unreadable frame: {exc}") from exc
    if not isinstance(message, dict) or message.get("v") != VERSION:
        raise ProtocolViolation(f"unsupported message: {message!r}")
    return message


# -- answer grammar --


def parse_pixel_answer(text: str) -> tuple:
    m = PIXEL_RE.search(text)
    if not m:
        raise ParseFailure(f"no (u, v) pair in answer: {text!r}")
    return (int(m.group(1)), int(m.group(2)))


def parse_bins_answer(text: str) -> DirectionBins:
    m = TRIPLE_RE.search(text)
    if not m:
        raise ParseFailure(f"no (a, b, c) triple in answer: {text!r}")
    try:
        return DirectionBins((int(m.group(1)), int(m.group(2)),
                              int(m.group(3))))
    except ValueError as exc:
        raise ParseFailure(f"bins out of range in answer: {text!r}") from exc


# -- transports --


class _StreamTransport:
    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    def send(self, message):
        # a peer that died mid-conversation surfaces here as a broken pipe;
        # report it as the protocol-level fault it is
        try:
            write_message(self.writer, message)
        except OSError as exc:
            raise ProtocolViolation(f"cannot write to the peer: {exc}") from exc

    def recv(self):
        try:
            message = read_message(self.reader)
        except OSError as exc:
            raise ProtocolViolation(f"cannot read from the peer: {exc}") from exc
        if message is None:
            raise ProtocolViolation("peer closed the stream")
        return message

    def close(self):
        pass


class _SubprocessTransport(_StreamTransport):
    def __init__(self, command):
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE)
        super().__init__(self.proc.stdout, self.proc.stdin)

    def close(self):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.wait(timeout=5)


class _SocketTransport(_StreamTransport):
    def __init__(self, address, timeout):
        self.sock = socket.create_connection(address, timeout=timeout)
        stream = self.sock.makefile("rwb")
        super().__init__(stream, stream)

    def close(self):
        try:
            self.reader.close()
        finally:
            self.sock.close()


def _inline_files(export_dir: Path, meta: dict) -> dict:
    blobs = {}
    for name in meta["files"].values():
        data = (Path(export_dir) / name).read_bytes()
        blobs[name] = base64.b64encode(data).decode("ascii")
    return blobs


class BridgePolicy(PolicyBase):
    """A policy whose answers come from a peer process over the bridge.

    Exactly one of command (subprocess over stdio) or address ((host, port)
    TCP) selects the peer. Observations are exported under export_dir per
    request; with inline=True their bytes also travel in the request for
    peers that cannot see this filesystem.
    """

    def __init__(self, export_dir, command=None, address=None, timeout=30.0,
                 inline=False):
        if (command is None) == (address is None):
            raise ValueError("pass exactly one of command or address")
        self.export_dir = Path(export_dir)
        self.command = command
        self.address = address
        self.timeout = timeout
        self.inline = inline
        self.session = "default"
        self._transport = None
        self._next_id = 0
        self._meta = None

    # -- wire plumbing --

    def _connect(self):
        if self._transport is not None:
            return self._transport
        try:
            if self.command is not None:
                self._transport = _SubprocessTransport(self.command)
            else:
                self._transport = _SocketTransport(self.address, self.timeout)
        except OSError as exc:
            raise ProtocolViolation(f"cannot reach the peer: {exc}") from exc
        self._transport.send({"v": VERSION, "kind": "hello",
                              "role": "orchestrator", "protocol": PROTOCOL})
        hello = self._transport.recv()
        if hello.get("kind") != "hello" or hello.get("role") != "policy":
            raise ProtocolViolation(f"bad handshake: {hello!r}")
        return self._transport

    def close(self):
        if self._transport is None:
            return
        try:
            self._transport.send({"v": VERSION, "kind": "bye"})
        except (OSError, ProtocolViolation):
            pass
        try:
            self._transport.close()
        finally:
            self._transport = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _export(self, observation):
        self._next_id += 1
        stem = f"{self.session}-{self._next_id:04d}"
        self.export_dir.mkdir(parents=True, exist_ok=True)
        meta = export_observation(observation, self.export_dir, stem,
                                  size=EXPORT_SIZE)
        self._meta = meta
        ref = {"dir": str(self.export_dir), "stem": stem}
        if self.inline:
            ref["blobs"] = _inline_files(self.export_dir, meta)
        return ref

    def _ask(self, task, prompt, observation_ref=None, step=None) -> str:
        transport = self._connect()
        self._next_id += 1
        request = {"v": VERSION, "kind": "request", "id": self._next_id,
                   "session": self.session, "task": task, "step": step,
                   "prompt": prompt, "observation": observation_ref}
        transport.send(request)
        reply = transport.recv()
        if reply.get("kind") == "error":
            raise ProtocolViolation(f"peer error: {reply.get('message')!r}")
        if reply.get("kind") != "response" or reply.get("id") != request["id"]:
            raise ProtocolViolation(f"unexpected reply: {reply!r}")
        text = reply.get("text")
        if not isinstance(text, str):
            raise ProtocolViolation(f"non-text response: {reply!r}")
        return text

    def _to_native(self, pixel) -> tuple:
        offset_u = self._meta["offset_u"]
        offset_v = self._meta["offset_v"]
        return (pixel[0] - offset_u, pixel[1] - offset_v)

    def _ask_action(self, task, prompt, observation, primitive, step=None):
        """Ask for a pose; the grammar allows one re-ask before giving up."""
        ref = self._export(observation)
        text = self._ask(task, prompt, ref, step=step)
        try:
            pixel = parse_pixel_answer(text)
            bins = parse_bins_answer(text)
        except ParseFailure:
            retry_prompt = (prompt + "\nThe previous answer could not be "
                            "parsed. Reply exactly as instructed.")
            text = self._ask(task, retry_prompt, ref, step=step)
            pixel = parse_pixel_answer(text)
            bins = parse_bins_answer(text)
        return Action(self._to_native(pixel), decode_direction(bins),
                      primitive)

    # -- the policy surface --

    def predict(self, observation, instruction):
        self._instruction = instruction
        from .prompts import render_template
        prompt = render_template("predict", instruction=instruction.text)
        return self._ask_action("predict", prompt, observation,
                                instruction.primitive)

    def correct_position(self, observation, transcript):
        primitive = getattr(self, "_instruction", None)
        primitive = primitive.primitive if primitive else None
        from .interaction import Primitive
        primitive = primitive or Primitive.PULL
        lines = []
        for exchange in transcript:
            lines.append(f"Q: {exchange.prompt}")
            if exchange.response:
                lines.append(f"A: {exchange.response}")
        prompt = "\n".join(lines)
        return self._ask_action("position_cot", prompt, observation,
                                primitive, step=4)

    def correct_rotation(self, fields) -> DirectionBins:
        from .prompts import render_template
        a, b, c = tuple(fields.axis_bins)
        na, nb, nc = tuple(fields.normal_bins)
        u, v = fields.contact_pixel
        prompt = render_template("rotation", kind=fields.kind.value.lower(),
                                 a=a, b=b, c=c, u=u, v=v,
                                 na=na, nb=nb, nc=nc)
        text = self._ask("rotation_correct", prompt)
        try:
            return parse_bins_answer(text)
        except ParseFailure:
            text = self._ask("rotation_correct",
                             prompt + "\nReply with only the bin triple "
                             "(a, b, c).")
            return parse_bins_answer(text)

    def answer_vqa(self, kind, observation, fields):
        prompt = fields.get("prompt")
        if not kind.startswith("position_step") or prompt is None:
            return super().answer_vqa(kind, observation, fields)
        step = int(kind[-1])
        ref = self._export(observation)
        return self._ask("position_cot", prompt, ref, step=step)


# -- serving the other side --


class ScriptedAnswerer:
    """Rulebook peer over exported observations: nearest unmasked pixel,
    pull toward the camera, axis-implied rotation fixes. Mirrors
    ScriptedPolicy so a bridge session is indistinguishable from a local one.
    """

    def answer(self, request: dict) -> str:
        task = request.get("task")
        if task == "predict":
            return self._pose_answer(request)
        if task == "position_cot":
            step = request.get("step")
            if step == 4:
                return self._pose_answer(request)
            return self._vqa_answer(request, step)
        if task == "rotation_correct":
            return self._rotation_answer(request)
        raise ValueError(f"unknown task {task!r}")

    def _load(self, request):
        ref = request.get("observation")
        if not ref:
            raise ValueError("request carries no observation")
        return load_exported_observation(ref["dir"], ref["stem"])

    def _pose_answer(self, request) -> str:
        exported = self._load(request)
        samples = exported.depth_samples.astype(np.int64)
        background = exported.meta["depth_background"]
        cost = samples.copy()
        cost[(samples == background) | exported.mask.astype(bool)] = \
            np.iinfo(np.int64).max
        flat = int(np.argmin(cost))
        v, u = divmod(flat, cost.shape[1])
        view = exported.meta["camera"]["view_direction"]
        toward = -np.asarray(view, dtype=np.float64)
        a, b, c = tuple(encode_direction(toward / np.linalg.norm(toward)))
        return f"({u}, {v}) with direction ({a}, {b}, {c})"

    def _vqa_answer(self, request, step) -> str:
        exported = self._load(request)
        mask = exported.mask.astype(bool)
        if step == 1:
            return "Yes" if mask.any() else "No"
        if step in (2, 3):
            pixel = parse_pixel_answer(request.get("prompt", ""))
            u = pixel[0] + exported.meta["offset_u"]
            v = pixel[1] + exported.meta["offset_v"]
            h, w = mask.shape
            inside = 0 <= u < w and 0 <= v < h and mask[v, u]
            if step == 2:
                return "Yes" if inside else "No"
            # same wording as the local mechanistic default, so a bridged
            # session's transcript is indistinguishable from a local one
            if inside:
                return "The contact was inside a masked region, which marks " \
                       "an unmovable part."
            return "The contact produced no motion, so the pose must change."
        return "Yes"

    def _rotation_answer(self, request) -> str:
        prompt = request.get("prompt", "")
        triples = TRIPLE_RE.findall(prompt)
        if len(triples) < 2:
            raise ValueError("rotation prompt lacks axis and normal bins")
        axis = decode_direction(DirectionBins(tuple(int(x)
                                                    for x in triples[0])))
        normal = decode_direction(DirectionBins(tuple(int(x)
                                                      for x in triples[1])))
        kind = (MotionClass.PRISMATIC if "prismatic" in prompt.lower()
                else MotionClass.REVOLUTE)
        d = axis_implied_direction(kind, axis, normal)
        a, b, c = tuple(encode_direction(d))
        return f"({a}, {b}, {c})"


def serve(answerer, reader, writer):
    """Run one peer conversation: handshake, answer requests until bye/EOF."""
    first = read_message(reader)
    if first is None:
        return
    if first.get("kind") != "hello":
        raise ProtocolViolation(f"expected hello, got {first!r}")
    write_message(writer, {"v": VERSION, "kind": "hello", "role": "policy",
                           "name": type(answerer).__name__})
    while True:
        message = read_message(reader)
        if message is None or message.get("kind") == "bye":
            return
        if message.get("kind") != "request":
            raise ProtocolViolation(f"expected request, got {message!r}")
        try:
            text = answerer.answer(message)
            write_message(writer, {"v": VERSION, "kind": "response",
                                   "id": message.get("id"), "text": text})
        except Exception as exc:
            write_message(writer, {"v": VERSION, "kind": "error",
                                   "id": message.get("id"),
                                   "message": str(exc)})


def serve_stdio(answerer):
    import sys
    serve(answerer, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(answerer, host: str, port: int, max_sessions=None,
              on_bound=None) -> int:
    """Listen and serve conversations; returns the bound port.

    on_bound, when given, is called with the port once listening starts
    (port 0 binds an ephemeral one).
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
                    serve(answerer, stream, stream)
                finally:
                    stream.close()
            served += 1
    finally:
        server.close()
    return bound

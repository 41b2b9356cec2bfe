"""Rulebooks: the decision logic behind each answer.

A rulebook turns one request into one line of text. The orchestrator parses
replies with a fixed grammar: the first ``(u, v)`` pair in the text is a
pixel in exported-image coordinates, the first ``(a, b, c)`` triple is a
direction as three bins of width 0.02 over [-1, 1] per component. Pose
answers therefore read ``(u, v) with direction (a, b, c)``; rotation
answers are a bare triple; the remaining steps are short verdict sentences.

MinDepthRulebook is the default and mirrors the orchestrator's own scripted
peer, so a session served by this package is indistinguishable from a local
one. The fault rulebooks exist to exercise the orchestrator's failure
paths on purpose. ModelHookRulebook is the seam for a real model: subclass
it and implement call_model.
"""

from __future__ import annotations

import re

import numpy as np

from .observations import Frame, load_frame

BIN_COUNT = 100
BIN_WIDTH = 0.02

PAIR_RE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")
TRIPLE_RE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")

# step-3 verdicts; the orchestrator's diagnosis quotes them verbatim, so
# the wording is part of the interface
MASKED_VERDICT = ("The contact was inside a masked region, which marks "
                  "an unmovable part.")
NO_MOTION_VERDICT = "The contact produced no motion, so the pose must change."


class ClientAbort(Exception):
    """Raised by a rulebook to hard-close the connection mid-session."""


def encode_bins(v) -> tuple:
    """Component x -> floor((x+1)/0.02), clamped to [0, 100)."""
    v = np.asarray(v, dtype=np.float64)
    bins = np.floor((v + 1.0) / BIN_WIDTH).astype(int)
    return tuple(int(b) for b in np.clip(bins, 0, BIN_COUNT - 1))


def decode_bins(triple) -> np.ndarray:
    """Bin centers renormalized to a unit vector."""
    t = tuple(int(x) for x in triple)
    if len(t) != 3 or any(x < 0 or x >= BIN_COUNT for x in t):
        raise ValueError(f"bins {triple!r} outside [0, {BIN_COUNT})")
    centers = -1.0 + BIN_WIDTH * np.array(t, dtype=np.float64) + BIN_WIDTH / 2
    n = float(np.linalg.norm(centers))
    if n < 1e-12:
        raise ValueError(f"bins {triple!r} decode to the zero vector")
    return centers / n


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return v / n


class Rulebook:
    """Dispatch by task; subclasses fill in the three answer forms."""

    def answer(self, request: dict) -> str:
        task = request.get("task")
        if task == "predict":
            return self.pose_answer(request)
        if task == "position_cot":
            step = request.get("step")
            if step == 4:
                return self.pose_answer(request)
            return self.step_answer(request, step)
        if task == "rotation_correct":
            return self.rotation_answer(request)
        raise ValueError(f"unknown task {task!r}")

    def pose_answer(self, request: dict) -> str:
        raise NotImplementedError

    def step_answer(self, request: dict, step) -> str:
        raise NotImplementedError

    def rotation_answer(self, request: dict) -> str:
        raise NotImplementedError


class MinDepthRulebook(Rulebook):
    """Grab the nearest visible unmasked pixel and pull toward the camera.

    Contact choice is the row-major argmin over quantized depth with
    background and masked pixels excluded; quantization is monotone, so no
    dequantization is needed to rank. The pull direction is the reversed
    view direction from the metadata. Rotation fixes answer with the
    direction the joint estimate implies: the axis itself for a sliding
    part, the contact normal stripped of its axis component for a hinged
    one.
    """

    def _frame(self, request: dict) -> Frame:
        ref = request.get("observation")
        if not ref:
            raise ValueError("request references no observation")
        return load_frame(ref)

    def pose_answer(self, request: dict) -> str:
        frame = self._frame(request)
        cost = frame.depth.astype(np.int64)
        cost[(frame.depth == frame.background) | frame.mask] = \
            np.iinfo(np.int64).max
        flat = int(np.argmin(cost))
        v, u = divmod(flat, cost.shape[1])
        view = np.asarray(frame.meta["camera"]["view_direction"],
                          dtype=np.float64)
        a, b, c = encode_bins(_unit(-view))
        return f"({u}, {v}) with direction ({a}, {b}, {c})"

    def step_answer(self, request: dict, step) -> str:
        frame = self._frame(request)
        if step == 1:
            return "Yes" if frame.mask.any() else "No"
        if step in (2, 3):
            m = PAIR_RE.search(request.get("prompt", ""))
            if not m:
                raise ValueError("step prompt names no pixel")
            u, v = frame.to_exported((int(m.group(1)), int(m.group(2))))
            h, w = frame.mask.shape
            inside = 0 <= u < w and 0 <= v < h and bool(frame.mask[v, u])
            if step == 2:
                return "Yes" if inside else "No"
            return MASKED_VERDICT if inside else NO_MOTION_VERDICT
        return "Yes"

    def rotation_answer(self, request: dict) -> str:
        prompt = request.get("prompt", "")
        triples = TRIPLE_RE.findall(prompt)
        if len(triples) < 2:
            raise ValueError("rotation prompt lacks axis and normal bins")
        axis = decode_bins(triples[0])
        normal = decode_bins(triples[1])
        if "prismatic" in prompt.lower():
            d = axis
        else:
            d = normal - np.dot(normal, axis) * axis
            if np.linalg.norm(d) < 1e-9:
                helper = (np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9
                          else np.array([0.0, 1.0, 0.0]))
                d = np.cross(axis, helper)
            d = _unit(d)
        a, b, c = encode_bins(d)
        return f"({a}, {b}, {c})"


class FixedEchoRulebook(Rulebook):
    """Answers every request with the same text. With text the pose grammar
    cannot parse, this drives the orchestrator's re-ask-then-abort path."""

    def __init__(self, text: str = "I would rather not say."):
        self.text = text

    def answer(self, request: dict) -> str:
        return self.text


class DieAfterRulebook(Rulebook):
    """Delegates to an inner rulebook for n answers, then aborts the
    connection without a parting frame: the orchestrator sees a peer that
    died mid-session."""

    def __init__(self, n: int, inner: Rulebook | None = None):
        if n < 0:
            raise ValueError("n must be >= 0")
        self.remaining = n
        self.inner = inner if inner is not None else MinDepthRulebook()

    def answer(self, request: dict) -> str:
        if self.remaining <= 0:
            raise ClientAbort(f"died on request {request.get('id')}")
        self.remaining -= 1
        return self.inner.answer(request)


class ModelHookRulebook(Rulebook):
    """Skeleton for answering with a real model instead of rules.

    Subclass and implement call_model; it receives the request's prompt and
    the parsed observation (None for requests that carry none, such as
    rotation fixes) and must return text the grammar above can parse. The
    serve loop, framing, and observation decoding are already handled.
    """

    def answer(self, request: dict) -> str:
        ref = request.get("observation")
        frame = load_frame(ref) if ref else None
        text = self.call_model(request.get("prompt", ""), frame)
        if not isinstance(text, str):
            raise ValueError("call_model must return text")
        return text

    def call_model(self, prompt: str, frame: Frame | None) -> str:
        raise NotImplementedError(
            "plug a model call in here: render the prompt (and frame, when "
            "given) into your model's input and return its reply text")


def make_rulebook(spec: str) -> Rulebook:
    """Build a rulebook from a CLI spec.

    Forms: ``min-depth``; ``echo:TEXT`` (constant reply TEXT); and
    ``die-after:N`` (min-depth for N answers, then a dead connection).
    """
    if spec == "min-depth":
        return MinDepthRulebook()
    if spec.startswith("echo:"):
        return FixedEchoRulebook(spec[len("echo:"):])
    if spec.startswith("die-after:"):
        raw = spec[len("die-after:"):]
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"die-after wants an integer, got {raw!r}")
        return DieAfterRulebook(n)
    raise ValueError(f"unknown rulebook {spec!r}")

"""Object asset files: a small versioned JSON schema for articulated objects.

Schema v1 layout::

    {
      "schema": "artisim-object/v1",
      "name": "drawer_unit",
      "parts": [
        {"id": 0, "movable": false,
         "boxes": [{"center": [x,y,z], "half_extents": [x,y,z],
                    "orientation": [qx,qy,qz,qw]}]},
        {"id": 1, "movable": true,
         "joint": {"kind": "prismatic", "origin": [x,y,z], "axis": [x,y,z],
                   "range": [lo, hi]},
         "boxes": [...]}
      ],
      "config": {"1": 0.0}
    }

``orientation`` defaults to identity and ``config`` entries default to 0.
Syntax errors report line/column; semantic errors report the offending JSON
path (e.g. ``parts[1].joint.axis``).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import AssetError
from .kinematics import ArticulatedObject, Box, Joint, JointKind, Part

SCHEMA_V1 = "artisim-object/v1"


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise AssetError(f"{path}: {message}")


def _vec(value, path: str, n: int) -> np.ndarray:
    _expect(isinstance(value, list) and len(value) == n, path,
            f"expected a list of {n} numbers")
    _expect(all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value),
            path, "expected numeric entries")
    return np.asarray(value, dtype=np.float64)


def _parse_box(raw, path: str) -> Box:
    _expect(isinstance(raw, dict), path, "expected an object")
    center = _vec(raw.get("center"), f"{path}.center", 3)
    half = _vec(raw.get("half_extents"), f"{path}.half_extents", 3)
    _expect(bool(np.all(half > 0)), f"{path}.half_extents", "must be strictly positive")
    if "orientation" in raw:
        quat = _vec(raw["orientation"], f"{path}.orientation", 4)
        norm = float(np.linalg.norm(quat))
        _expect(abs(norm - 1.0) < 1e-6, f"{path}.orientation",
                f"quaternion norm {norm:.6g} is not 1")
        return Box(center, half, quat)
    return Box(center, half)


def _parse_joint(raw, path: str) -> Joint:
    _expect(isinstance(raw, dict), path, "expected an object")
    kind_str = raw.get("kind")
    _expect(kind_str in ("prismatic", "revolute"), f"{path}.kind",
            "must be 'prismatic' or 'revolute'")
    origin = _vec(raw.get("origin"), f"{path}.origin", 3)
    axis = _vec(raw.get("axis"), f"{path}.axis", 3)
    norm = float(np.linalg.norm(axis))
    _expect(abs(norm - 1.0) < 1e-6, f"{path}.axis", f"norm {norm:.6g} is not 1")
    rng = raw.get("range")
    _expect(isinstance(rng, list) and len(rng) == 2, f"{path}.range",
            "expected [lo, hi]")
    lo, hi = float(rng[0]), float(rng[1])
    _expect(lo < hi, f"{path}.range", f"empty range [{lo}, {hi}]")
    return Joint(JointKind(kind_str), origin, axis, (lo, hi))


def parse_object(doc: dict, name_fallback: str = "object") -> ArticulatedObject:
    """Build an ArticulatedObject from a parsed schema-v1 document."""
    _expect(isinstance(doc, dict), "$", "expected a JSON object")
    _expect(doc.get("schema") == SCHEMA_V1, "schema",
            f"expected '{SCHEMA_V1}', got {doc.get('schema')!r}")
    raw_parts = doc.get("parts")
    _expect(isinstance(raw_parts, list) and raw_parts, "parts",
            "expected a non-empty list")

    parts = []
    seen_ids = set()
    for i, rp in enumerate(raw_parts):
        path = f"parts[{i}]"
        _expect(isinstance(rp, dict), path, "expected an object")
        pid = rp.get("id")
        _expect(isinstance(pid, int) and not isinstance(pid, bool), f"{path}.id",
                "expected an integer id")
        _expect(pid not in seen_ids, f"{path}.id", f"duplicate part id {pid}")
        seen_ids.add(pid)
        movable = rp.get("movable")
        _expect(isinstance(movable, bool), f"{path}.movable", "expected a boolean")
        joint = None
        if movable:
            _expect("joint" in rp, f"{path}.joint", "movable part needs a joint")
            joint = _parse_joint(rp["joint"], f"{path}.joint")
        else:
            _expect("joint" not in rp, f"{path}.joint", "static part cannot have a joint")
        raw_boxes = rp.get("boxes")
        _expect(isinstance(raw_boxes, list) and raw_boxes, f"{path}.boxes",
                "expected a non-empty list")
        boxes = tuple(_parse_box(rb, f"{path}.boxes[{j}]") for j, rb in enumerate(raw_boxes))
        parts.append(Part(id=pid, movable=movable, joint=joint, boxes=boxes))

    config = {}
    raw_config = doc.get("config", {})
    _expect(isinstance(raw_config, dict), "config", "expected an object")
    for key, value in raw_config.items():
        try:
            pid = int(key)
        except ValueError:
            raise AssetError(f"config.{key}: key is not a part id") from None
        _expect(pid in seen_ids, f"config.{key}", "unknown part id")
        _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
                f"config.{key}", "expected a number")
        config[pid] = float(value)
    for p in parts:
        if p.movable:
            q = config.setdefault(p.id, 0.0)
            lo, hi = p.joint.range
            _expect(lo <= q <= hi, f"config.{p.id}",
                    f"value {q} outside joint range [{lo}, {hi}]")

    name = doc.get("name", name_fallback)
    _expect(isinstance(name, str), "name", "expected a string")
    return ArticulatedObject(parts=tuple(parts), config=config, name=name)


def load_object(path) -> ArticulatedObject:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise AssetError(f"{path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise AssetError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        return parse_object(doc, name_fallback=path.stem)
    except AssetError as e:
        raise AssetError(f"{path}: {e}") from None


def object_to_doc(obj: ArticulatedObject) -> dict:
    """Inverse of parse_object, for writing suites to disk."""
    parts = []
    for p in obj.parts:
        rp = {
            "id": p.id,
            "movable": p.movable,
            "boxes": [
                {
                    "center": [float(v) for v in b.center],
                    "half_extents": [float(v) for v in b.half_extents],
                    "orientation": [float(v) for v in b.orientation],
                }
                for b in p.boxes
            ],
        }
        if p.movable:
            j = p.joint
            rp["joint"] = {
                "kind": j.kind.value,
                "origin": [float(v) for v in j.origin],
                "axis": [float(v) for v in j.axis],
                "range": [j.range[0], j.range[1]],
            }
        parts.append(rp)
    return {
        "schema": SCHEMA_V1,
        "name": obj.name,
        "parts": parts,
        "config": {str(k): float(v) for k, v in sorted(obj.config.items())},
    }


def save_object(obj: ArticulatedObject, path):
    path = Path(path)
    path.write_text(json.dumps(object_to_doc(obj), indent=2, sort_keys=True) + "\n")

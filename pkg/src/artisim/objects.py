"""Parametric desk-scale cabinets for benchmarks and data generation.

Every object faces +x and is meant to be viewed by front_camera(), which
looks along -x. Drawers translate along +x (out of the cabinet, toward the
viewer); doors hinge about a vertical axis and open toward the viewer, so
the direction implied by the joint axis and the front-face normal at a
panel contact is the direction that actually opens the object. Cabinets
keep a static plinth and top band visible from the front, which gives
feedback masks something to attach to.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .assets import ArticulatedObject, Box, Joint, JointKind, Part, save_object, load_object

WALL = 0.02
BAND = 0.06
PANEL_GAP = 0.005


def front_camera(width: int = 96, height: int = 96, pixel_size: float = 0.0075):
    from .scene import Camera

    return Camera(view_direction=(-1.0, 0.0, 0.0), up=(0.0, 0.0, 1.0),
                  frame_center=(0.8, 0.0, 0.0), width=width, height=height,
                  pixel_size=pixel_size)


def _shell_boxes(width: float, height: float, depth: float):
    """Static carcass: back slab, side walls, and front top/bottom bands."""

    w2, h2 = width / 2, height / 2
    return (
        Box(center=(-depth + WALL / 2, 0.0, 0.0),
            half_extents=(WALL / 2, w2, h2)),
        Box(center=(-depth / 2, w2 - WALL / 2, 0.0),
            half_extents=(depth / 2, WALL / 2, h2)),
        Box(center=(-depth / 2, -(w2 - WALL / 2), 0.0),
            half_extents=(depth / 2, WALL / 2, h2)),
        Box(center=(-0.005, 0.0, -(h2 - BAND / 2)),
            half_extents=(0.015, w2, BAND / 2)),
        Box(center=(-0.005, 0.0, h2 - BAND / 2),
            half_extents=(0.015, w2, BAND / 2)),
    )


def _opening(width: float, height: float):
    """Half extents of the front panel that fills the shell opening."""

    return (width / 2 - WALL - PANEL_GAP,
            height / 2 - BAND - PANEL_GAP)


def drawer_cabinet(name: str, width: float = 0.45, height: float = 0.4,
                   depth: float = 0.3, travel: float = 0.18) -> ArticulatedObject:
    """Cabinet with one drawer that pulls straight out along +x."""

    if travel <= 0.02:
        raise ValueError("travel must exceed 0.02 for the success metric to bite")
    pw, ph = _opening(width, height)
    shell = Part(id=0, movable=False, boxes=_shell_boxes(width, height, depth))
    drawer = Part(
        id=1, movable=True,
        joint=Joint(kind=JointKind.PRISMATIC, origin=(0.0, 0.0, 0.0),
                    axis=(1.0, 0.0, 0.0), range=(0.0, travel)),
        boxes=(
            Box(center=(0.02, 0.0, 0.0), half_extents=(0.02, pw, ph)),
            Box(center=(-depth / 2 + WALL, 0.0, -ph + WALL),
                half_extents=(depth / 2 - WALL, pw - WALL, WALL)),
        ),
    )
    return ArticulatedObject(parts=(shell, drawer), config={1: 0.0}, name=name)


def door_cabinet(name: str, width: float = 0.45, height: float = 0.4,
                 depth: float = 0.3, max_open: float = 1.2,
                 hinge_side: str = "left") -> ArticulatedObject:
    """Cabinet with one front door hinged on a vertical edge.

    The joint axis is +z for both hinge sides; what differs is the sign of
    the opening range. With the hinge at y = +pw the swing toward the
    viewer is +q, with the hinge at y = -pw it is -q, and the range is
    oriented so the roomy side of the range is always the opening swing.
    """

    if max_open <= 0.02:
        raise ValueError("max_open must exceed 0.02 for the success metric to bite")
    if hinge_side not in ("left", "right"):
        raise ValueError("hinge_side must be 'left' or 'right'")
    pw, ph = _opening(width, height)
    hinge_y = pw if hinge_side == "left" else -pw
    joint_range = (0.0, max_open) if hinge_side == "left" else (-max_open, 0.0)
    shell = Part(id=0, movable=False, boxes=_shell_boxes(width, height, depth))
    door = Part(
        id=1, movable=True,
        joint=Joint(kind=JointKind.REVOLUTE, origin=(0.0, hinge_y, 0.0),
                    axis=(0.0, 0.0, 1.0), range=joint_range),
        boxes=(Box(center=(0.02, 0.0, 0.0), half_extents=(0.02, pw, ph)),),
    )
    return ArticulatedObject(parts=(shell, door), config={1: 0.0}, name=name)


def generate_suite(count: int, seed: int = 0):
    """Deterministic list of cabinet variants, drawers and doors alternating."""

    if count < 1:
        raise ValueError("count must be at least 1")
    objects = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        width = float(rng.uniform(0.35, 0.55))
        height = float(rng.uniform(0.3, 0.5))
        depth = float(rng.uniform(0.25, 0.4))
        if i % 2 == 0:
            travel = float(rng.uniform(0.12, 0.22))
            objects.append(drawer_cabinet(
                f"drawer-{i:02d}", width, height, depth, travel))
        else:
            max_open = float(rng.uniform(0.9, 1.5))
            side = "left" if (i // 2) % 2 == 0 else "right"
            objects.append(door_cabinet(
                f"door-{i:02d}", width, height, depth, max_open, side))
    return objects


def write_suite(out_dir, objects) -> None:
    """Save objects plus an index file naming them in order."""

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for obj in objects:
        save_object(obj, out / f"{obj.name}.json")
        names.append(obj.name)
    index = {"objects": names}
    (out / "suite.json").write_text(
        json.dumps(index, sort_keys=True, separators=(",", ":")) + "\n")


def load_suite(suite_dir):
    root = Path(suite_dir)
    index = json.loads((root / "suite.json").read_text())
    return [load_object(root / f"{name}.json") for name in index["objects"]]

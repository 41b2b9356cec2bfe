"""Observations: orthographic depth/part-id rendering, pixel lifting, surface
normals, the ground-truth interaction map, and mask overlays.

The camera is orthographic: every pixel casts a ray along ``view_direction``
from a point on the frame plane. Depth is the signed distance along the view
direction from that plane, so lifting a pixel is exact. Pixel (u, v) means
column u (along the camera's right vector) and row v (downward).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    BackgroundPixel,
    DimensionMismatch,
    EmptyScene,
    NotOnSurface,
)
from .kinematics import ArticulatedObject, normalize, part_frame, quat_to_matrix

FACE_TOL = 1e-6

DEPTH_BACKGROUND = 65535  # sentinel sample in exported 16-bit depth images
DEPTH_MAX_SAMPLE = 65534

OBSERVATION_SCHEMA = "artisim-observation/v1"


@dataclass(frozen=True)
class Camera:
    """Orthographic camera over a width x height pixel grid."""

    view_direction: np.ndarray
    up: np.ndarray
    frame_center: np.ndarray
    width: int
    height: int
    pixel_size: float

    def __post_init__(self):
        view = normalize(np.asarray(self.view_direction, dtype=np.float64))
        up = np.asarray(self.up, dtype=np.float64)
        up = up - np.dot(up, view) * view
        if np.linalg.norm(up) < 1e-9:
            raise ValueError("up is parallel to the view direction")
        up = normalize(up)
        object.__setattr__(self, "view_direction", view)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "frame_center",
                           np.asarray(self.frame_center, dtype=np.float64))
        if self.width < 16 or self.height < 16:
            raise ValueError("camera frame must be at least 16x16 pixels")
        if self.pixel_size <= 0:
            raise ValueError("pixel size must be positive")

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.view_direction, self.up)

    def pixel_origin(self, u: float, v: float) -> np.ndarray:
        """Ray origin for (possibly fractional) pixel coordinates."""
        s = self.pixel_size
        return (self.frame_center
                + (u + 0.5 - self.width / 2) * s * self.right
                - (v + 0.5 - self.height / 2) * s * self.up)

    def lift(self, u: float, v: float, depth: float) -> np.ndarray:
        return self.pixel_origin(u, v) + depth * self.view_direction

    def project(self, point) -> tuple:
        """World point -> (u, v, depth), fractional pixel coordinates."""
        d = np.asarray(point, dtype=np.float64) - self.frame_center
        s = self.pixel_size
        u = np.dot(d, self.right) / s + self.width / 2 - 0.5
        v = -np.dot(d, self.up) / s + self.height / 2 - 0.5
        return u, v, float(np.dot(d, self.view_direction))

    def to_dict(self) -> dict:
        return {
            "view_direction": [float(x) for x in self.view_direction],
            "up": [float(x) for x in self.up],
            "frame_center": [float(x) for x in self.frame_center],
            "width": self.width,
            "height": self.height,
            "pixel_size": self.pixel_size,
        }

    @staticmethod
    def from_dict(d: dict) -> "Camera":
        return Camera(
            np.array(d["view_direction"]), np.array(d["up"]),
            np.array(d["frame_center"]), int(d["width"]), int(d["height"]),
            float(d["pixel_size"]),
        )


@dataclass(frozen=True, eq=False)
class Observation:
    """Rendered scene snapshot: depth, part ids, and the accumulated mask layer.

    Background pixels have depth +inf and part id -1. The mask layer is the
    union of all masks overlaid so far and always stays within foreground.
    """

    depth: np.ndarray
    part_id: np.ndarray
    camera: Camera
    mask_layer: np.ndarray = field(default=None)

    def __post_init__(self):
        h, w = self.camera.height, self.camera.width
        if self.depth.shape != (h, w) or self.part_id.shape != (h, w):
            raise DimensionMismatch("depth/part_id shape does not match camera frame")
        if self.mask_layer is None:
            object.__setattr__(self, "mask_layer", np.zeros((h, w), dtype=bool))
        elif self.mask_layer.shape != (h, w):
            raise DimensionMismatch("mask layer shape does not match camera frame")
        finite = np.isfinite(self.depth)
        if not np.array_equal(finite, self.part_id >= 0):
            raise ValueError("finite depth and foreground part ids disagree")

    @property
    def foreground(self) -> np.ndarray:
        return self.part_id >= 0

    def is_foreground(self, pixel) -> bool:
        u, v = int(pixel[0]), int(pixel[1])
        if not (0 <= u < self.camera.width and 0 <= v < self.camera.height):
            return False
        return bool(self.part_id[v, u] >= 0)


def _pack_boxes(obj: ArticulatedObject, camera: Camera):
    """World-frame box data rotated into each box frame for the kernel."""
    centers, rots, halfs, pids = [], [], [], []
    for part in obj.parts:
        r_part, t_part = part_frame(obj, part.id)
        for box in part.boxes:
            r_world = r_part @ quat_to_matrix(box.orientation)
            centers.append(r_part @ box.center + t_part)
            rots.append(r_world)
            halfs.append(box.half_extents)
            pids.append(part.id)
    n = len(pids)
    base = camera.pixel_origin(0, 0)
    du = camera.pixel_size * camera.right
    dv = -camera.pixel_size * camera.up
    view = camera.view_direction
    box_base = np.empty((n, 3))
    box_du = np.empty((n, 3))
    box_dv = np.empty((n, 3))
    box_dir = np.empty((n, 3))
    for i in range(n):
        rt = rots[i].T
        box_base[i] = rt @ (base - centers[i])
        box_du[i] = rt @ du
        box_dv[i] = rt @ dv
        box_dir[i] = rt @ view
    return box_base, box_du, box_dv, box_dir, np.array(halfs), np.array(pids, dtype=np.int32)


def render(obj: ArticulatedObject, camera: Camera) -> Observation:
    """Ray-cast the object at its current configuration. Nearest hit wins."""
    if not obj.parts:
        raise EmptyScene("object has no parts")
    box_base, box_du, box_dv, box_dir, halfs, pids = _pack_boxes(obj, camera)
    depth, pid = _kernels.raycast(box_base, box_du, box_dv, box_dir, halfs, pids,
                                  camera.height, camera.width)
    if not np.any(pid >= 0):
        raise EmptyScene("no part visible in the camera frame")
    return Observation(depth=depth, part_id=pid, camera=camera)


def lift_pixel(observation: Observation, pixel) -> np.ndarray:
    """3D point of a foreground pixel at its stored depth."""
    u, v = int(pixel[0]), int(pixel[1])
    if not observation.is_foreground((u, v)):
        raise BackgroundPixel(f"pixel ({u}, {v}) has no surface")
    return observation.camera.lift(u, v, float(observation.depth[v, u]))


def surface_normal(obj: ArticulatedObject, part_id: int, world_point) -> np.ndarray:
    """Outward unit normal of the box face containing the point, world frame."""
    part = obj.part(part_id)
    r_part, t_part = part_frame(obj, part_id)
    p = np.asarray(world_point, dtype=np.float64)
    best = None  # (face_error, normal)
    for box in part.boxes:
        r_world = r_part @ quat_to_matrix(box.orientation)
        center = r_part @ box.center + t_part
        local = r_world.T @ (p - center)
        he = box.half_extents
        if np.any(np.abs(local) > he + FACE_TOL):
            continue
        for i in range(3):
            err = abs(abs(local[i]) - he[i])
            if err <= FACE_TOL and (best is None or err < best[0]):
                sign = 1.0 if local[i] >= 0 else -1.0
                best = (err, sign * r_world[:, i])
    if best is None:
        raise NotOnSurface(f"point {p} is on no face of part {part_id}")
    return best[1]


def interaction_map(obj: ArticulatedObject, camera: Camera) -> np.ndarray:
    """Boolean H x W map: does this pixel show a movable part?"""
    return movable_map(obj, render(obj, camera))


def movable_map(obj: ArticulatedObject, observation: Observation) -> np.ndarray:
    """interaction_map against an existing render of the same object state."""
    out = np.zeros_like(observation.part_id, dtype=bool)
    for part in obj.parts:
        if part.movable:
            out |= observation.part_id == part.id
    return out


def overlay_mask(observation: Observation, mask: np.ndarray) -> Observation:
    """New observation with the mask unioned into the mask layer."""
    if mask.shape != observation.mask_layer.shape:
        raise DimensionMismatch(
            f"mask shape {mask.shape} vs {observation.mask_layer.shape}")
    return replace(observation, mask_layer=observation.mask_layer | mask.astype(bool))


# -- export for the external policy bridge ------------------------------------


def quantize_depth(depth: np.ndarray) -> tuple:
    """Map finite depths to uint16 samples 0..65534; background is 65535.

    Returns (samples, depth_min, depth_max). Inverse: depth = depth_min +
    sample/65534 * (depth_max - depth_min) for samples below the sentinel.
    """
    finite = np.isfinite(depth)
    samples = np.full(depth.shape, DEPTH_BACKGROUND, dtype=np.uint16)
    if not np.any(finite):
        return samples, 0.0, 0.0
    d_min = float(depth[finite].min())
    d_max = float(depth[finite].max())
    if d_max > d_min:
        scaled = (depth[finite] - d_min) / (d_max - d_min) * DEPTH_MAX_SAMPLE
        samples[finite] = np.round(scaled).astype(np.uint16)
    else:
        samples[finite] = 0
    return samples, d_min, d_max


def _write_png16(path: Path, samples: np.ndarray):
    from PIL import Image

    h, w = samples.shape
    data = np.ascontiguousarray(samples, dtype="<u2").tobytes()
    Image.frombytes("I;16", (w, h), data).save(path)


def _read_png16(path: Path) -> np.ndarray:
    from PIL import Image

    arr = np.asarray(Image.open(path))
    return arr.astype(np.uint16)


def export_observation(observation: Observation, out_dir, stem: str,
                       size: tuple | None = None) -> dict:
    """Write depth and mask as 16-bit grayscale PNGs plus a metadata sidecar.

    ``size`` = (width, height) pads or center-crops the images to that frame;
    the metadata records the (offset_u, offset_v) of the native image inside
    the exported one so pixel answers can be mapped back. Returns the metadata
    dict (with file paths under "files").
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h, w = observation.depth.shape
    samples, d_min, d_max = quantize_depth(observation.depth)
    mask = observation.mask_layer

    if size is None:
        off_u = off_v = 0
        out_w, out_h = w, h
    else:
        out_w, out_h = int(size[0]), int(size[1])
        off_u = (out_w - w) // 2
        off_v = (out_h - h) // 2
        samples = _place(samples, out_h, out_w, off_u, off_v, DEPTH_BACKGROUND)
        mask = _place(mask.astype(np.uint16), out_h, out_w, off_u, off_v, 0).astype(bool)

    depth_path = out_dir / f"{stem}.depth.png"
    mask_path = out_dir / f"{stem}.mask.png"
    meta_path = out_dir / f"{stem}.meta.json"
    _write_png16(depth_path, samples)
    _write_png16(mask_path, np.where(mask, np.uint16(65535), np.uint16(0)))
    meta = {
        "schema": OBSERVATION_SCHEMA,
        "camera": observation.camera.to_dict(),
        "native_width": w,
        "native_height": h,
        "width": out_w,
        "height": out_h,
        "offset_u": off_u,
        "offset_v": off_v,
        "depth_min": d_min,
        "depth_max": d_max,
        "depth_background": DEPTH_BACKGROUND,
        "files": {
            "depth": depth_path.name,
            "mask": mask_path.name,
            "meta": meta_path.name,
        },
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def _place(src: np.ndarray, out_h: int, out_w: int, off_u: int, off_v: int, fill):
    """Paste src into an out_h x out_w canvas at (off_u, off_v); crops if negative."""
    out = np.full((out_h, out_w), fill, dtype=src.dtype)
    h, w = src.shape
    dst_v0, dst_u0 = max(off_v, 0), max(off_u, 0)
    src_v0, src_u0 = max(-off_v, 0), max(-off_u, 0)
    copy_h = min(h - src_v0, out_h - dst_v0)
    copy_w = min(w - src_u0, out_w - dst_u0)
    if copy_h > 0 and copy_w > 0:
        out[dst_v0:dst_v0 + copy_h, dst_u0:dst_u0 + copy_w] = \
            src[src_v0:src_v0 + copy_h, src_u0:src_u0 + copy_w]
    return out


@dataclass(frozen=True, eq=False)
class ExportedObservation:
    """What a bridge peer sees: quantized depth, mask, and the sidecar metadata."""

    depth_samples: np.ndarray  # uint16, background = DEPTH_BACKGROUND
    mask: np.ndarray  # bool
    meta: dict


def load_exported_observation(out_dir, stem: str) -> ExportedObservation:
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / f"{stem}.meta.json").read_text())
    depth = _read_png16(out_dir / f"{stem}.depth.png")
    mask = _read_png16(out_dir / f"{stem}.mask.png") > 0
    return ExportedObservation(depth_samples=depth, mask=mask, meta=meta)

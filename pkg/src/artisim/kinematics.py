"""Rigid-pose algebra and the articulated-object model.

Poses are position + unit quaternion. Quaternions are scalar-last ``(x, y, z, w)``
everywhere in this package. Objects are flat collections of parts; a movable
part carries exactly one prismatic or revolute joint and the object's ``config``
maps part id to the current joint value q.

Box geometry and joint origins are authored in the part's zero-configuration
frame, which coincides with the world frame at q = 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRadius, NotMovable, UnknownPart

UNIT_TOL = 1e-9


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    return a


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < UNIT_TOL:
        raise ValueError("cannot normalize near-zero vector")
    return v / n


# -- quaternions (scalar-last) -------------------------------------------------

QUAT_IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a*b, both scalar-last."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conjugate(q) -> np.ndarray:
    x, y, z, w = q
    return np.array([-x, -y, -z, w])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate 3-vector v by unit quaternion q."""
    x, y, z, w = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=np.float64)
    # v' = v + 2 w (u x v) + 2 u x (u x v)
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = normalize(_vec3(axis))
    half = 0.5 * float(angle)
    s = np.sin(half)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, np.cos(half)])


def quat_to_matrix(q) -> np.ndarray:
    x, y, z, w = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = normalize(_vec3(axis))
    c, s = np.cos(angle), np.sin(angle)
    k = 1.0 - c
    return np.array([
        [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
        [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
        [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
    ])


@dataclass(frozen=True, eq=False)
class SE3Pose:
    """Rigid transform: rotate by ``orientation`` then translate by ``position``."""

    position: np.ndarray
    orientation: np.ndarray  # scalar-last unit quaternion

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        q = np.asarray(self.orientation, dtype=np.float64)
        if q.shape != (4,):
            raise ValueError(f"expected quaternion shape (4,), got {q.shape}")
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} not 1")
        object.__setattr__(self, "orientation", q / n)

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.zeros(3), QUAT_IDENTITY.copy())

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """self * other: apply other first, then self."""
        return SE3Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_mul(self.orientation, other.orientation),
        )

    def inverse(self) -> "SE3Pose":
        qc = quat_conjugate(self.orientation)
        return SE3Pose(-quat_rotate(qc, self.position), qc)

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, _vec3(p))

    def as_row(self) -> list:
        """Flat [px, py, pz, qx, qy, qz, qw] for log serialization."""
        return [float(v) for v in (*self.position, *self.orientation)]

    @staticmethod
    def from_row(row) -> "SE3Pose":
        row = list(row)
        return SE3Pose(np.array(row[:3]), np.array(row[3:7]))


class JointKind(enum.Enum):
    PRISMATIC = "prismatic"
    REVOLUTE = "revolute"


@dataclass(frozen=True)
class Joint:
    """Single-DOF joint. Origin and axis are world-frame at q = 0.

    Range units are scene units for prismatic joints and radians for revolute.
    """

    kind: JointKind
    origin: np.ndarray
    axis: np.ndarray
    range: tuple  # (q_lo, q_hi)

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin))
        axis = _vec3(self.axis)
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
            axis = normalize(axis)
        object.__setattr__(self, "axis", axis)
        lo, hi = float(self.range[0]), float(self.range[1])
        if not lo < hi:
            raise ValueError(f"joint range [{lo}, {hi}] is empty")
        object.__setattr__(self, "range", (lo, hi))


@dataclass(frozen=True)
class Box:
    """Oriented box in the part's zero-configuration frame."""

    center: np.ndarray
    half_extents: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        he = _vec3(self.half_extents)
        if np.any(he <= 0):
            raise ValueError("half extents must be strictly positive")
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))


@dataclass(frozen=True)
class Part:
    id: int
    movable: bool
    boxes: tuple
    joint: Joint | None = None

    def __post_init__(self):
        if self.movable != (self.joint is not None):
            raise ValueError("movable parts need exactly one joint, static parts none")
        if not self.boxes:
            raise ValueError("part geometry is empty")
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass
class ArticulatedObject:
    """Parts plus the current joint configuration.

    The config dict is the only mutable state; everything else is frozen.
    """

    parts: tuple
    config: dict
    name: str = "object"

    def __post_init__(self):
        self.parts = tuple(self.parts)
        ids = [p.id for p in self.parts]
        if len(set(ids)) != len(ids):
            raise ValueError("part ids must be unique")
        for p in self.parts:
            if p.movable:
                q = float(self.config.get(p.id, 0.0))
                lo, hi = p.joint.range
                if not lo - 1e-12 <= q <= hi + 1e-12:
                    raise ValueError(f"config for part {p.id} outside joint range")
                self.config[p.id] = q

    def part(self, part_id: int) -> Part:
        for p in self.parts:
            if p.id == part_id:
                return p
        raise UnknownPart(f"no part with id {part_id}")

    def movable_part_ids(self) -> list:
        return [p.id for p in self.parts if p.movable]

    def clone(self) -> "ArticulatedObject":
        return ArticulatedObject(self.parts, dict(self.config), self.name)


def part_frame(obj: ArticulatedObject, part_id: int) -> tuple:
    """World transform of the part at its current q, as (R, t): world = R @ local + t."""
    part = obj.part(part_id)
    if not part.movable:
        return np.eye(3), np.zeros(3)
    q = obj.config[part_id]
    j = part.joint
    if j.kind is JointKind.PRISMATIC:
        return np.eye(3), q * j.axis
    r = rotation_matrix(j.axis, q)
    return r, j.origin - r @ j.origin


def part_point_world(obj: ArticulatedObject, part_id: int, local_point) -> np.ndarray:
    """Map a zero-configuration point of the part into the world at the current q."""
    r, t = part_frame(obj, part_id)
    return r @ _vec3(local_point) + t


def part_point_local(obj: ArticulatedObject, part_id: int, world_point) -> np.ndarray:
    """Inverse of part_point_world at the current q."""
    r, t = part_frame(obj, part_id)
    return r.T @ (_vec3(world_point) - t)


def joint_motion_direction(obj: ArticulatedObject, part_id: int, contact) -> np.ndarray:
    """Unit direction the contact point moves for dq > 0.

    Prismatic: the joint axis. Revolute: axis x (contact - origin), normalized;
    undefined when the contact sits on the axis line.
    """
    part = obj.part(part_id)
    if not part.movable:
        raise NotMovable(f"part {part_id} has no joint")
    j = part.joint
    if j.kind is JointKind.PRISMATIC:
        return j.axis.copy()
    r = _vec3(contact) - j.origin
    r_perp = r - np.dot(r, j.axis) * j.axis
    if np.linalg.norm(r_perp) < UNIT_TOL:
        raise DegenerateRadius("contact lies on the hinge axis line")
    return normalize(np.cross(j.axis, r))


def contact_speed(obj: ArticulatedObject, part_id: int, contact) -> float:
    """|d(contact)/dq|: 1 for prismatic, perpendicular hinge distance for revolute."""
    part = obj.part(part_id)
    if not part.movable:
        raise NotMovable(f"part {part_id} has no joint")
    j = part.joint
    if j.kind is JointKind.PRISMATIC:
        return 1.0
    r = _vec3(contact) - j.origin
    return float(np.linalg.norm(np.cross(j.axis, r)))


def apply_joint_delta(obj: ArticulatedObject, part_id: int, dq: float) -> float:
    """Move the joint by dq, clamped to its range. Returns the delta actually applied."""
    part = obj.part(part_id)
    if not part.movable:
        raise NotMovable(f"part {part_id} has no joint")
    lo, hi = part.joint.range
    q = obj.config[part_id]
    q_new = min(max(q + float(dq), lo), hi)
    obj.config[part_id] = q_new
    return q_new - q

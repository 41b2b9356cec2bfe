"""Suction pulls: execute a contact-pose action against one joint and judge
the outcome.

The physics surrogate is quasi-static: each frame projects the gripper
direction onto the contact point's instantaneous motion direction. Below the
grip alignment threshold the suction slips and nothing moves that frame;
above it the joint advances by the projected step divided by the contact
speed, clamped to the joint range. The end effector rides the contact point
rigidly, so prismatic parts trace straight lines and revolute parts trace
arcs of constant hinge radius.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BackgroundPixel, DegenerateRadius, InvalidDirection
from .kinematics import (
    ArticulatedObject,
    Joint,
    JointKind,
    SE3Pose,
    apply_joint_delta,
    contact_speed,
    joint_motion_direction,
    part_point_local,
    part_point_world,
    quat_from_axis_angle,
    quat_mul,
)
from .scene import Observation, lift_pixel


class Primitive(enum.Enum):
    PULL = "Pull"
    PUSH = "Push"


@dataclass(frozen=True)
class Action:
    """Contact pose: a pixel to attach at and a gripper direction."""

    contact_pixel: tuple
    gripper_direction: np.ndarray
    primitive: Primitive = Primitive.PULL

    def __post_init__(self):
        u, v = int(self.contact_pixel[0]), int(self.contact_pixel[1])
        object.__setattr__(self, "contact_pixel", (u, v))
        d = np.asarray(self.gripper_direction, dtype=np.float64)
        if d.shape != (3,):
            raise InvalidDirection(f"direction shape {d.shape}, expected (3,)")
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise InvalidDirection(
                f"|direction| = {np.linalg.norm(d):.8f}, expected 1")
        object.__setattr__(self, "gripper_direction", d)
        if not isinstance(self.primitive, Primitive):
            object.__setattr__(self, "primitive", Primitive(self.primitive))


@dataclass(frozen=True)
class PullParams:
    total_distance: float = 0.1
    frames: int = 20
    grip_alignment_threshold: float = 0.3
    movement_epsilon: float = 1e-4

    def __post_init__(self):
        if self.frames < 3:
            raise ValueError("need at least 3 frames")
        if self.total_distance <= 0:
            raise ValueError("total distance must be positive")


@dataclass(frozen=True)
class Trajectory:
    """End-effector poses over one pull, start pose included."""

    poses: tuple  # frames+1 SE3Pose
    contacted_part: int
    q_before: float
    q_after: float

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if not self.poses:
            raise ValueError("trajectory has no poses")

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses])

    def as_rows(self) -> np.ndarray:
        return np.array([p.as_row() for p in self.poses])

    @staticmethod
    def from_rows(rows, contacted_part: int, q_before: float,
                  q_after: float) -> "Trajectory":
        poses = tuple(SE3Pose.from_row(r) for r in np.asarray(rows))
        return Trajectory(poses, contacted_part, q_before, q_after)


@dataclass(frozen=True)
class MetricParams:
    delta_threshold: float = 0.01
    range_fraction_threshold: float = 0.5
    direction_dot_threshold: float = 0.3


@dataclass(frozen=True)
class SuccessReport:
    success: bool
    delta_q: float
    range_fraction: float
    direction_dot: float


def _grip_orientation(direction: np.ndarray) -> np.ndarray:
    """Quaternion of the smallest rotation taking +z to the gripper direction."""
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, direction))
    if c > 1.0 - 1e-12:
        return np.array([0.0, 0.0, 0.0, 1.0])
    if c < -1.0 + 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])  # flip about x
    axis = np.cross(z, direction)
    angle = float(np.arctan2(np.linalg.norm(axis), c))
    return quat_from_axis_angle(axis / np.linalg.norm(axis), angle)


def execute_pull(obj: ArticulatedObject, observation: Observation,
                 action: Action, params: PullParams = PullParams()) -> Trajectory:
    """Attach at the action's pixel and pull; mutates the object's config.

    The contact point is the lifted pixel. An immovable contact leaves the
    object untouched and records a stationary trajectory.
    """
    u, v = action.contact_pixel
    if not observation.is_foreground((u, v)):
        raise BackgroundPixel(f"cannot attach at background pixel ({u}, {v})")
    pid = int(observation.part_id[v, u])
    contact = lift_pixel(observation, (u, v))
    d = action.gripper_direction
    q0_ee = _grip_orientation(d)
    part = obj.part(pid)

    if not part.movable:
        pose = SE3Pose(contact, q0_ee)
        return Trajectory(poses=(pose,) * (params.frames + 1),
                          contacted_part=pid, q_before=0.0, q_after=0.0)

    joint = part.joint
    q_start = float(obj.config[pid])
    contact_local = part_point_local(obj, pid, contact)
    step = params.total_distance / params.frames
    sign = -1.0 if action.primitive is Primitive.PUSH else 1.0

    def ee_pose() -> SE3Pose:
        pos = part_point_world(obj, pid, contact_local)
        if joint.kind is JointKind.REVOLUTE:
            swing = quat_from_axis_angle(joint.axis, obj.config[pid] - q_start)
            return SE3Pose(pos, quat_mul(swing, q0_ee))
        return SE3Pose(pos, q0_ee)

    poses = [ee_pose()]
    for _ in range(params.frames):
        point = part_point_world(obj, pid, contact_local)
        try:
            m_hat = joint_motion_direction(obj, pid, point)
            speed = contact_speed(obj, pid, point)
        except DegenerateRadius:
            poses.append(poses[-1])
            continue
        align = float(np.dot(d, m_hat))
        if abs(align) < params.grip_alignment_threshold or speed < 1e-9:
            poses.append(poses[-1])
            continue
        apply_joint_delta(obj, pid, sign * step * align / speed)
        poses.append(ee_pose())

    return Trajectory(poses=tuple(poses), contacted_part=pid,
                      q_before=q_start, q_after=float(obj.config[pid]))


def movement_direction(trajectory: Trajectory) -> np.ndarray | None:
    """Unit vector of the first nonzero contact displacement, or None."""
    pos = trajectory.positions()
    deltas = np.diff(pos, axis=0)
    for delta in deltas:
        n = float(np.linalg.norm(delta))
        if n > 1e-12:
            return delta / n
    return None


def evaluate_success(trajectory: Trajectory, joint: Joint | None,
                     gripper_direction,
                     params: MetricParams = MetricParams()) -> SuccessReport:
    """Score one pull. Joint values count directly: scene units for prismatic
    travel, radians for revolute, so the delta threshold applies to both."""
    delta_q = trajectory.q_after - trajectory.q_before
    if joint is None:
        range_fraction = 0.0
    else:
        lo, hi = joint.range
        range_fraction = abs(delta_q) / (hi - lo)
    move_dir = movement_direction(trajectory)
    if move_dir is None:
        return SuccessReport(success=False, delta_q=delta_q,
                             range_fraction=range_fraction, direction_dot=0.0)
    d = np.asarray(gripper_direction, dtype=np.float64)
    direction_dot = float(np.dot(d, move_dir))
    moved_enough = (abs(delta_q) > params.delta_threshold
                    or range_fraction > params.range_fraction_threshold)
    aligned = direction_dot > params.direction_dot_threshold
    return SuccessReport(success=bool(moved_enough and aligned), delta_q=delta_q,
                         range_fraction=range_fraction, direction_dot=direction_dot)

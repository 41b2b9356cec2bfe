"""Feedback extraction from interaction outcomes.

Everything a failed attempt can teach lives here: classifying the contacted
joint from the end-effector trajectory, estimating the rotation axis from
chord cross products, querying whether a pixel shows a movable part, and
segmenting/accumulating masks over unmovable parts.

Movability and segmentation are ground-truth oracles against the object
model. They keep the interface a learned perception backend would have, so
the bridge can substitute one without touching callers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import (
    BackgroundPixel,
    CollinearTrajectory,
    DegenerateChords,
    MovablePart,
    NoMovement,
    TooShort,
)
from .interaction import Trajectory
from .kinematics import ArticulatedObject, normalize
from .scene import Observation

# A 20-frame arc spanning 5 degrees turns about 0.26 degrees per step, and
# that span must still classify as an arc; noiseless lines turn by nothing.
DEFAULT_TURN_THRESHOLD = np.deg2rad(0.2)
DEFAULT_MOVEMENT_EPSILON = 1e-4

CHORD_EPSILON = 1e-9


class MotionClass(enum.Enum):
    PRISMATIC = "Prismatic"
    REVOLUTE = "Revolute"
    NO_MOTION = "NoMotion"


@dataclass(frozen=True)
class JointEstimate:
    kind: MotionClass
    axis: np.ndarray | None
    confidence: int  # trajectories that contributed

    def __post_init__(self):
        if (self.axis is None) != (self.kind is MotionClass.NO_MOTION):
            raise ValueError("axis present iff motion was observed")
        if self.axis is not None:
            a = np.asarray(self.axis, dtype=np.float64)
            if abs(np.linalg.norm(a) - 1.0) > 1e-6:
                raise ValueError("axis must be unit length")
            object.__setattr__(self, "axis", a)


@dataclass(frozen=True)
class Mask:
    pixels: np.ndarray  # H x W booleans
    source_pixel: tuple

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=bool))
        u, v = int(self.source_pixel[0]), int(self.source_pixel[1])
        object.__setattr__(self, "source_pixel", (u, v))
        if self.pixels.any() and not self.pixels[v, u]:
            raise ValueError("source pixel outside its own mask")


@dataclass(frozen=True)
class FeedbackRecord:
    """What one session has learned so far. Masks only ever grow."""

    joint_estimate: JointEstimate | None = None
    masks: tuple = ()
    trajectories: tuple = ()

    def mask_union(self, shape=None) -> np.ndarray:
        if not self.masks:
            if shape is None:
                raise ValueError("empty record needs an explicit shape")
            return np.zeros(shape, dtype=bool)
        out = np.zeros_like(self.masks[0].pixels)
        for m in self.masks:
            out |= m.pixels
        return out

    def with_trajectory(self, trajectory: Trajectory) -> "FeedbackRecord":
        return replace(self, trajectories=self.trajectories + (trajectory,))

    def with_estimate(self, estimate: JointEstimate) -> "FeedbackRecord":
        return replace(self, joint_estimate=estimate)


def accumulate(record: FeedbackRecord, mask: Mask) -> FeedbackRecord:
    return replace(record, masks=record.masks + (mask,))


def displacement_vectors(trajectory: Trajectory) -> np.ndarray:
    """Per-frame end-effector displacements, one per recorded step."""
    pos = trajectory.positions()
    if len(pos) < 2:
        raise TooShort("need at least two poses")
    return np.diff(pos, axis=0)


def _path_length(vectors: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(vectors, axis=1)))


def classify_joint(trajectory: Trajectory,
                   angle_threshold: float = DEFAULT_TURN_THRESHOLD,
                   movement_epsilon: float = DEFAULT_MOVEMENT_EPSILON) -> MotionClass:
    """Straight path -> prismatic, turning path -> revolute, else no motion.

    The turning test looks at angles between consecutive nonzero displacement
    vectors; frames where the grip slipped contribute nothing.
    """
    vectors = displacement_vectors(trajectory)
    if _path_length(vectors) < movement_epsilon:
        return MotionClass.NO_MOTION
    norms = np.linalg.norm(vectors, axis=1)
    moving = vectors[norms > 1e-12]
    for a, b in zip(moving[:-1], moving[1:]):
        cos = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
        if np.arccos(np.clip(cos, -1.0, 1.0)) >= angle_threshold:
            return MotionClass.REVOLUTE
    return MotionClass.PRISMATIC


def _chords(trajectory: Trajectory) -> tuple:
    """(first-half, second-half, full) chords of the position sequence."""
    pos = trajectory.positions()
    mid = len(pos) // 2
    return pos[mid] - pos[0], pos[-1] - pos[mid], pos[-1] - pos[0]


def estimate_axis_single(trajectory: Trajectory) -> np.ndarray:
    """Axis from one arc: cross product of its two half chords.

    The sign follows the observed rotation sense (right-hand rule), so
    traversing the same arc backwards flips the estimate.
    """
    h1, h2, _ = _chords(trajectory)
    cross = np.cross(h1, h2)
    n = float(np.linalg.norm(cross))
    if n < CHORD_EPSILON:
        raise CollinearTrajectory("chords are collinear; no plane to cross")
    return cross / n


def estimate_axis_multi(trajectories, kind: MotionClass,
                        include_half_chords: bool = True,
                        refine: bool = False) -> np.ndarray:
    """Pool several trajectories of the same joint into one axis estimate.

    Prismatic: sign-aligned mean of the total displacement vectors.
    Revolute: sign-aligned mean of all pairwise chord cross products, the
    chords being each trajectory's two halves plus its full span. With
    ``refine`` the mean seeds a least-squares pass (the direction most
    perpendicular to every chord).
    """
    if kind is MotionClass.PRISMATIC:
        dirs = []
        for t in trajectories:
            full = _chords(t)[2]
            if np.linalg.norm(full) > CHORD_EPSILON:
                dirs.append(full)
        if not dirs:
            raise NoMovement("no trajectory moved")
        ref = dirs[0]
        aligned = [d if np.dot(d, ref) >= 0 else -d for d in dirs]
        return normalize(np.sum([normalize(d) for d in aligned], axis=0))

    chords = []
    for t in trajectories:
        h1, h2, full = _chords(t)
        parts = (h1, h2, full) if include_half_chords else (full,)
        chords.extend(c for c in parts if np.linalg.norm(c) > CHORD_EPSILON)
    if not chords:
        raise NoMovement("no trajectory moved")

    crosses = []
    for i in range(len(chords)):
        for j in range(i + 1, len(chords)):
            c = np.cross(chords[i], chords[j])
            if np.linalg.norm(c) > CHORD_EPSILON:
                crosses.append(c)
    if not crosses:
        raise DegenerateChords("all chords are collinear")
    ref = crosses[0]
    aligned = [c if np.dot(c, ref) >= 0 else -c for c in crosses]
    axis = normalize(np.sum([normalize(c) for c in aligned], axis=0))

    if refine:
        m = np.array(chords)
        _, _, vt = np.linalg.svd(m, full_matrices=True)
        candidate = vt[-1]
        if np.dot(candidate, axis) < 0:
            candidate = -candidate
        axis = candidate
    return axis


def estimate_joint(trajectories,
                   angle_threshold: float = DEFAULT_TURN_THRESHOLD,
                   movement_epsilon: float = DEFAULT_MOVEMENT_EPSILON,
                   include_half_chords: bool = True,
                   refine: bool = False) -> JointEstimate:
    """Classify from the latest moving trajectory, estimate over all of them."""
    moving = [t for t in trajectories
              if _path_length(displacement_vectors(t)) >= movement_epsilon]
    if not moving:
        return JointEstimate(MotionClass.NO_MOTION, None, 0)
    kind = classify_joint(moving[-1], angle_threshold, movement_epsilon)
    axis = estimate_axis_multi(moving, kind, include_half_chords, refine)
    return JointEstimate(kind, axis, len(moving))


# -- movability and masks -----------------------------------------------------


def movability_query(obj: ArticulatedObject, observation: Observation,
                     pixel) -> bool:
    """Ground-truth answer to "does this pixel show a movable part?"."""
    u, v = int(pixel[0]), int(pixel[1])
    if not observation.is_foreground((u, v)):
        raise BackgroundPixel(f"pixel ({u}, {v}) shows no part")
    return obj.part(int(observation.part_id[v, u])).movable


def segment_unmovable(obj: ArticulatedObject, observation: Observation,
                      pixel) -> Mask:
    """Smallest-region stand-in: the queried pixel's connected same-part region."""
    if movability_query(obj, observation, pixel):
        raise MovablePart(f"pixel {tuple(pixel)} is on a movable part")
    u, v = int(pixel[0]), int(pixel[1])
    same_part = observation.part_id == observation.part_id[v, u]
    labels, _ = ndimage.label(same_part)
    return Mask(pixels=labels == labels[v, u], source_pixel=(u, v))


# -- mask serialization -------------------------------------------------------


def rle_encode(mask: np.ndarray) -> dict:
    """Row-major run lengths, alternating off/on and starting with off."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    value = False
    count = 0
    for bit in flat:
        if bit == value:
            count += 1
        else:
            runs.append(count)
            value = bit
            count = 1
    runs.append(count)
    return {"shape": list(mask.shape), "runs": runs}


def rle_decode(encoded: dict) -> np.ndarray:
    shape = tuple(encoded["shape"])
    out = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    value = False
    for run in encoded["runs"]:
        if value:
            out[pos:pos + run] = True
        pos += run
        value = not value
    if pos != out.size:
        raise ValueError(f"run lengths cover {pos} of {out.size} pixels")
    return out.reshape(shape)

"""Policies: direction discretization, reference implementations, and
test-time adaptation.

A policy proposes contact poses, repairs them when the correction loop asks,
and may adapt from its own session experience. Reference implementations:

- OraclePolicy: ground truth against the bound object, for calibration.
- PerturbedPolicy: oracle plus contact/direction noise, the standard noisy
  stand-in that exercises the correction machinery.
- ScriptedPolicy: a deterministic depth-based rulebook needing no object
  access; mirrors what an external bridge peer can compute from exports.
- LearnablePolicy: a transparent logit grid + categorical direction head
  with gradient-style updates, enough to observe adaptation effects.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRadius, DegenerateZero, NoMovableVisible, NotUnit
from .feedback import MotionClass
from .interaction import Action, Primitive
from .kinematics import joint_motion_direction, contact_speed, normalize, rotation_matrix
from .scene import Observation, lift_pixel, movable_map, quantize_depth

BIN_COUNT = 100
BIN_WIDTH = 0.02


@dataclass(frozen=True)
class DirectionBins:
    """A direction as three discretized components, each in [0, 100)."""

    bins: tuple

    def __post_init__(self):
        b = tuple(int(x) for x in self.bins)
        if len(b) != 3:
            raise ValueError("need exactly three bins")
        if any(x < 0 or x >= BIN_COUNT for x in b):
            raise ValueError(f"bins {b} outside [0, {BIN_COUNT})")
        object.__setattr__(self, "bins", b)

    def __iter__(self):
        return iter(self.bins)


def encode_direction(v) -> DirectionBins:
    """Component x -> bin floor((x+1)/0.02), so -1 is bin 0 and +1 bin 99.

    Binning is per component, so any direction-like vector with components
    in [-1, 1] is accepted (axis shorthand such as (-1, 0, 1) included);
    normalizing first would move the boundary components off their bins.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise NotUnit(f"expected a 3-vector, got shape {v.shape}")
    if np.max(np.abs(v)) > 1.0 + 1e-6 or np.linalg.norm(v) < 1e-12:
        raise NotUnit(f"components of {v} do not describe a direction")
    bins = np.floor((v + 1.0) / BIN_WIDTH).astype(int)
    return DirectionBins(tuple(np.clip(bins, 0, BIN_COUNT - 1)))


def decode_direction(bins: DirectionBins) -> np.ndarray:
    """Bin centers renormalized to a unit vector."""
    b = np.array(tuple(bins), dtype=np.float64)
    centers = -1.0 + BIN_WIDTH * b + BIN_WIDTH / 2
    n = float(np.linalg.norm(centers))
    if n < 1e-12:
        # centers are odd hundredths, so valid bins can never land here
        raise DegenerateZero("bin centers decode to the zero vector")
    return centers / n


@dataclass(frozen=True)
class Instruction:
    primitive: Primitive
    text: str

    def __post_init__(self):
        if not isinstance(self.primitive, Primitive):
            object.__setattr__(self, "primitive", Primitive(self.primitive))


@dataclass(frozen=True)
class TtaSchedule:
    """Step-decayed learning rate with weight decay."""

    lr0: float = 5e-8
    weight_decay: float = 2e-3
    decay_factor: float = 0.3
    decay_every: int = 300

    def lr(self, k: int) -> float:
        if k < 0:
            raise ValueError("iteration counter cannot be negative")
        return self.lr0 * self.decay_factor ** (k // self.decay_every)


@dataclass(frozen=True)
class RotationPromptFields:
    """Everything a rotation-correction prompt substitutes."""

    kind: MotionClass
    axis_bins: DirectionBins
    contact_pixel: tuple
    normal_bins: DirectionBins


class ExperienceKind(enum.Enum):
    MASK_PRESENCE_VQA = "MaskPresenceVqa"
    MASK_POSITION_VQA = "MaskPositionVqa"
    CORRECTED_POSE_SUPERVISION = "CorrectedPoseSupervision"


@dataclass(frozen=True)
class ExperienceItem:
    kind: ExperienceKind
    observation: Observation
    target: dict


def axis_implied_direction(kind: MotionClass, axis, normal) -> np.ndarray:
    """Gripper direction a joint estimate suggests at a contact.

    Prismatic parts move along the axis, so the (sign-carrying) estimate is
    the direction. For revolute parts the useful pull at a face is the
    surface normal stripped of its axis component: on a door that swings
    toward the viewer this is the tangent sense that opens it.
    """
    axis = normalize(np.asarray(axis, dtype=np.float64))
    if kind is MotionClass.NO_MOTION:
        raise ValueError("no direction is implied without motion")
    if kind is MotionClass.PRISMATIC:
        return axis
    n = np.asarray(normal, dtype=np.float64)
    p = n - np.dot(n, axis) * axis
    if np.linalg.norm(p) < 1e-9:
        helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 \
            else np.array([0.0, 1.0, 0.0])
        p = np.cross(axis, helper)
    return normalize(p)


class PolicyBase:
    """Contract shared by every policy. answer_vqa has a mechanistic default
    so only bridge-backed policies need to produce free text."""

    supports_adaptation = False

    def predict(self, observation: Observation, instruction: Instruction) -> Action:
        raise NotImplementedError

    def correct_position(self, observation: Observation, transcript) -> Action:
        raise NotImplementedError

    def correct_rotation(self, fields: RotationPromptFields) -> DirectionBins:
        raise NotImplementedError

    def answer_vqa(self, kind: str, observation: Observation, fields: dict) -> str:
        if kind in ("position_step1", "mask_classification"):
            return "Yes" if observation.mask_layer.any() else "No"
        if kind == "position_step2":
            u, v = fields["pixel"]
            return "Yes" if observation.mask_layer[v, u] else "No"
        if kind == "position_step3":
            u, v = fields["pixel"]
            if observation.mask_layer[v, u]:
                return "The contact was inside a masked region, which marks " \
                       "an unmovable part."
            return "The contact produced no motion, so the pose must change."
        if kind == "position_step5":
            return "Yes"
        return ""

    def adapt(self, items, lr: float) -> "PolicyBase":
        return self


class OraclePolicy(PolicyBase):
    """Ground-truth policy over the bound object."""

    def __init__(self, obj=None):
        self._obj = obj
        self._instruction = None

    def bind(self, obj) -> "OraclePolicy":
        self._obj = obj
        return self

    def _require_object(self):
        if self._obj is None:
            raise ValueError("oracle policy needs bind(object) first")
        return self._obj

    def ranked_movable_pixels(self, observation: Observation,
                              exclude: np.ndarray | None = None) -> np.ndarray:
        """Movable pixels ordered centroid-first, (v, u) rows."""
        candidates = movable_map(self._require_object(), observation)
        if exclude is not None:
            candidates = candidates & ~exclude
        px = np.argwhere(candidates)
        if len(px) == 0:
            raise NoMovableVisible("no (unmasked) movable pixel in view")
        centroid = px.mean(axis=0)
        d2 = ((px - centroid) ** 2).sum(axis=1)
        order = np.lexsort((px[:, 1], px[:, 0], d2))
        return px[order]

    def direction_at(self, observation: Observation, pixel,
                     primitive: Primitive) -> np.ndarray:
        """Motion direction at the pixel, signed toward the roomier range end."""
        obj = self._require_object()
        u, v = int(pixel[0]), int(pixel[1])
        pid = int(observation.part_id[v, u])
        point = lift_pixel(observation, (u, v))
        m = joint_motion_direction(obj, pid, point)
        lo, hi = obj.part(pid).joint.range
        q = obj.config[pid]
        base = m if (hi - q) >= (q - lo) else -m
        return -base if primitive is Primitive.PUSH else base

    def _choose(self, observation: Observation, primitive: Primitive,
                exclude: np.ndarray | None = None) -> Action:
        obj = self._require_object()
        for v, u in self.ranked_movable_pixels(observation, exclude):
            try:
                d = self.direction_at(observation, (u, v), primitive)
            except DegenerateRadius:
                continue
            point = lift_pixel(observation, (u, v))
            if contact_speed(obj, int(observation.part_id[v, u]), point) < 1e-6:
                continue
            return Action((int(u), int(v)), d, primitive)
        raise NoMovableVisible("every movable pixel is degenerate")

    def predict(self, observation, instruction):
        self._instruction = instruction
        return self._choose(observation, instruction.primitive)

    def correct_position(self, observation, transcript):
        primitive = self._instruction.primitive if self._instruction \
            else Primitive.PULL
        return self._choose(observation, primitive,
                            exclude=observation.mask_layer)

    def correct_rotation(self, fields: RotationPromptFields) -> DirectionBins:
        d = axis_implied_direction(fields.kind, decode_direction(fields.axis_bins),
                                   decode_direction(fields.normal_bins))
        return encode_direction(d)


class PerturbedPolicy(PolicyBase):
    """Oracle with contact and direction noise; corrections are clean.

    With probability p_static the predicted contact lands on a random static
    pixel; the direction is the oracle's rotated by N(0, sigma_dir) radians
    about a random perpendicular. correct_position re-picks the oracle pixel
    outside every accumulated mask (fresh direction noise); correct_rotation
    returns the axis-implied direction.
    """

    def __init__(self, oracle: OraclePolicy, p_static: float, sigma_dir: float,
                 rng: np.random.Generator):
        if not 0.0 <= p_static <= 1.0:
            raise ValueError("p_static must be a probability")
        self.oracle = oracle
        self.p_static = p_static
        self.sigma_dir = sigma_dir
        self.rng = rng
        self._instruction = None

    def bind(self, obj) -> "PerturbedPolicy":
        self.oracle.bind(obj)
        return self

    def _noisy(self, direction: np.ndarray) -> np.ndarray:
        angle = self.rng.normal(0.0, self.sigma_dir)
        perp = np.cross(direction, self.rng.normal(size=3))
        if np.linalg.norm(perp) < 1e-12:
            helper = np.array([1.0, 0.0, 0.0]) if abs(direction[0]) < 0.9 \
                else np.array([0.0, 1.0, 0.0])
            perp = np.cross(direction, helper)
        return rotation_matrix(normalize(perp), angle) @ direction

    def predict(self, observation, instruction):
        self._instruction = instruction
        base = self.oracle.predict(observation, instruction)
        pixel = base.contact_pixel
        pick_static = self.rng.random() < self.p_static
        if pick_static:
            obj = self.oracle._require_object()
            static = observation.foreground & ~movable_map(obj, observation)
            spots = np.argwhere(static)
            if len(spots):
                v, u = spots[self.rng.integers(len(spots))]
                pixel = (int(u), int(v))
        return Action(pixel, self._noisy(base.gripper_direction),
                      instruction.primitive)

    def correct_position(self, observation, transcript):
        base = self.oracle.correct_position(observation, transcript)
        return Action(base.contact_pixel, self._noisy(base.gripper_direction),
                      base.primitive)

    def correct_rotation(self, fields: RotationPromptFields) -> DirectionBins:
        d = axis_implied_direction(fields.kind, decode_direction(fields.axis_bins),
                                   decode_direction(fields.normal_bins))
        return encode_direction(d)


class ScriptedPolicy(PolicyBase):
    """Object-blind rulebook: nearest unmasked pixel, pull toward the camera.

    Works from exactly what an exported observation carries (quantized depth,
    mask, camera), so a bridge peer implementing the same rules is
    indistinguishable from this policy.
    """

    def __init__(self):
        self._instruction = None

    def _nearest_pixel(self, observation: Observation,
                       exclude: np.ndarray) -> tuple:
        samples, _, _ = quantize_depth(observation.depth)
        cost = samples.astype(np.int64)
        invalid = ~observation.foreground | exclude
        cost[invalid] = np.iinfo(np.int64).max
        flat = int(np.argmin(cost))
        v, u = divmod(flat, observation.camera.width)
        if invalid[v, u]:
            raise NoMovableVisible("every foreground pixel is masked")
        return (u, v)

    def _camera_pull_direction(self, observation: Observation) -> np.ndarray:
        toward = -observation.camera.view_direction
        return decode_direction(encode_direction(toward))

    def predict(self, observation, instruction):
        self._instruction = instruction
        pixel = self._nearest_pixel(observation, observation.mask_layer)
        return Action(pixel, self._camera_pull_direction(observation),
                      instruction.primitive)

    def correct_position(self, observation, transcript):
        primitive = self._instruction.primitive if self._instruction \
            else Primitive.PULL
        pixel = self._nearest_pixel(observation, observation.mask_layer)
        return Action(pixel, self._camera_pull_direction(observation), primitive)

    def correct_rotation(self, fields: RotationPromptFields) -> DirectionBins:
        d = axis_implied_direction(fields.kind, decode_direction(fields.axis_bins),
                                   decode_direction(fields.normal_bins))
        return encode_direction(d)


class LearnablePolicy(PolicyBase):
    """Contact logit grid plus a categorical direction head.

    Deliberately transparent: the adaptation mechanics (what gets supervised,
    when, at which rate) are the subject under test, not the function class.
    The paper-scale learning rate is meant for full models; use
    default_schedule() for rates that move these logits.
    """

    supports_adaptation = True

    def __init__(self, seed: int, weight_decay: float = 2e-3):
        self._rng = np.random.default_rng(seed)
        self.weight_decay = weight_decay
        self.contact_logits = None
        self.bin_logits = None
        self._instruction = None

    @staticmethod
    def default_schedule() -> TtaSchedule:
        return TtaSchedule(lr0=0.5, weight_decay=2e-3, decay_factor=0.3,
                           decay_every=300)

    def _ensure(self, observation: Observation):
        if self.contact_logits is None:
            h, w = observation.depth.shape
            self.contact_logits = self._rng.normal(scale=1e-3, size=(h, w))
            self.bin_logits = self._rng.normal(scale=1e-3, size=(3, BIN_COUNT))

    def _best_pixel(self, observation: Observation,
                    exclude: np.ndarray | None = None) -> tuple:
        self._ensure(observation)
        valid = observation.foreground.copy()
        if exclude is not None:
            valid &= ~exclude
        if not valid.any():
            raise NoMovableVisible("no valid pixel to predict")
        scores = np.where(valid, self.contact_logits, -np.inf)
        flat = int(np.argmax(scores))
        v, u = divmod(flat, observation.camera.width)
        return (u, v)

    def _direction_bins(self) -> DirectionBins:
        return DirectionBins(tuple(int(np.argmax(row)) for row in self.bin_logits))

    def predict(self, observation, instruction):
        self._instruction = instruction
        pixel = self._best_pixel(observation)
        return Action(pixel, decode_direction(self._direction_bins()),
                      instruction.primitive)

    def correct_position(self, observation, transcript):
        primitive = self._instruction.primitive if self._instruction \
            else Primitive.PULL
        pixel = self._best_pixel(observation, exclude=observation.mask_layer)
        return Action(pixel, decode_direction(self._direction_bins()), primitive)

    def correct_rotation(self, fields: RotationPromptFields) -> DirectionBins:
        d = axis_implied_direction(fields.kind, decode_direction(fields.axis_bins),
                                   decode_direction(fields.normal_bins))
        return encode_direction(d)

    # -- adaptation --

    def _force_below_unmasked(self, mask: np.ndarray):
        unmasked = ~mask
        if mask.any() and unmasked.any():
            floor = float(self.contact_logits[unmasked].min()) - 1.0
            self.contact_logits[mask] = floor

    def _grid_ce_step(self, observation: Observation, pixel, lr: float):
        fg = observation.foreground
        z = self.contact_logits[fg]
        p = np.exp(z - z.max())
        p /= p.sum()
        grad = np.zeros_like(self.contact_logits)
        grad[fg] = p
        u, v = pixel
        grad[v, u] -= 1.0
        self.contact_logits -= lr * (grad + self.weight_decay * self.contact_logits)

    def _bins_ce_step(self, bins, lr: float):
        for row, target in zip(self.bin_logits, bins):
            p = np.exp(row - row.max())
            p /= p.sum()
            grad = p.copy()
            grad[target] -= 1.0
            row -= lr * (grad + self.weight_decay * row)

    def adapt(self, items, lr: float) -> "LearnablePolicy":
        if lr == 0.0 or not items:
            return self
        for item in items:
            self._ensure(item.observation)
            if item.kind is ExperienceKind.MASK_PRESENCE_VQA:
                if item.target.get("present"):
                    self._force_below_unmasked(item.observation.mask_layer)
            elif item.kind is ExperienceKind.MASK_POSITION_VQA:
                u, v = item.target["pixel"]
                if item.target["on_mask"]:
                    one = np.zeros_like(item.observation.mask_layer)
                    one[v, u] = True
                    self._force_below_unmasked(one)
                else:
                    self.contact_logits[v, u] += lr
            elif item.kind is ExperienceKind.CORRECTED_POSE_SUPERVISION:
                self._grid_ce_step(item.observation, item.target["pixel"], lr)
                self._bins_ce_step(item.target["bins"], lr)
        return self


def extract_experience(session_log) -> list:
    """Turn one finished session into adaptation items per the TTA rules:
    mask presence/position pairs for each accumulated mask, and pose
    supervision only from corrected attempts that actually succeeded."""
    from .scene import overlay_mask

    items = []
    observation = session_log.observation
    union = session_log.feedback.mask_union(observation.depth.shape) \
        if session_log.feedback.masks else None
    for mask in session_log.feedback.masks:
        masked_obs = overlay_mask(observation, mask.pixels)
        items.append(ExperienceItem(ExperienceKind.MASK_PRESENCE_VQA,
                                    masked_obs, {"present": True}))
        items.append(ExperienceItem(ExperienceKind.MASK_POSITION_VQA,
                                    masked_obs,
                                    {"pixel": mask.source_pixel, "on_mask": True}))
        off = observation.foreground & ~union
        spots = np.argwhere(off)
        if len(spots):
            v, u = spots[0]
            items.append(ExperienceItem(
                ExperienceKind.MASK_POSITION_VQA, masked_obs,
                {"pixel": (int(u), int(v)), "on_mask": False}))
    for attempt in session_log.attempts:
        if attempt.correction_kind is not None and attempt.report.success:
            bins = encode_direction(attempt.action.gripper_direction)
            items.append(ExperienceItem(
                ExperienceKind.CORRECTED_POSE_SUPERVISION, observation,
                {"pixel": attempt.action.contact_pixel, "bins": tuple(bins)}))
    return items


def tta_step(policy: PolicyBase, session_log, schedule: TtaSchedule,
             k: int) -> tuple:
    """One adaptation step from one session; returns (policy, new counter).

    Only the given session feeds the update, and the counter advances by the
    number of experience items consumed.
    """
    items = extract_experience(session_log)
    if not policy.supports_adaptation or not items:
        return policy, k
    policy = policy.adapt(items, schedule.lr(k))
    return policy, k + len(items)

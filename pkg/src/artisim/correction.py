"""The interactive correction loop.

A session is one contact-pose prediction followed by up to N corrected
retries. Every failed attempt is diagnosed from its trajectory: a contact
that moved the part (just not usefully) gets a rotation correction from the
estimated joint, while a dead contact is probed along the surface normal,
then either rotation-corrected (probe moved), or masked and routed through
the position chain of thought (contact landed on something unmovable).
The object is reset before every attempt and probe, so attempts only differ
through the policy's choices.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ArtisimError,
    NoEstimate,
    NoMasks,
    ParseFailure,
    PolicyFailure,
)
from .feedback import (
    DEFAULT_MOVEMENT_EPSILON,
    DEFAULT_TURN_THRESHOLD,
    FeedbackRecord,
    JointEstimate,
    Mask,
    MotionClass,
    accumulate,
    estimate_joint,
    movability_query,
    rle_decode,
    rle_encode,
    segment_unmovable,
)
from .interaction import (
    Action,
    MetricParams,
    Primitive,
    PullParams,
    SuccessReport,
    Trajectory,
    evaluate_success,
    execute_pull,
)
from .policy import RotationPromptFields, decode_direction, encode_direction
from .prompts import PromptExchange, render_template
from .scene import lift_pixel, overlay_mask, render, surface_normal


class Diagnosis(enum.Enum):
    MOVED = "Moved"
    NO_MOTION = "NoMotion"


class FailureCause(enum.Enum):
    MOVED = "Moved"
    NO_MOTION_PROBE_MOVED = "NoMotionProbeMoved"
    NO_MOTION_CONTACT_INVALID = "NoMotionContactInvalid"


class CorrectionKind(enum.Enum):
    POSITION = "Position"
    ROTATION = "Rotation"


@dataclass(frozen=True)
class SessionParams:
    """Knobs for one correction session; the toggles exist for ablations."""

    n_corrections: int = 4
    pull: PullParams = field(default_factory=PullParams)
    metric: MetricParams = field(default_factory=MetricParams)
    probe_scale: float = 0.25
    position_correction: bool = True
    rotation_correction: bool = True
    movement_epsilon: float = DEFAULT_MOVEMENT_EPSILON
    angle_threshold: float = DEFAULT_TURN_THRESHOLD

    def __post_init__(self):
        if self.n_corrections < 0:
            raise ValueError("n_corrections cannot be negative")
        if not 0.0 < self.probe_scale <= 1.0:
            raise ValueError("probe_scale must be in (0, 1]")


@dataclass(frozen=True)
class AttemptRecord:
    index: int
    action: Action
    trajectory: Trajectory
    report: SuccessReport
    cause: FailureCause | None = None
    correction_kind: CorrectionKind | None = None
    prompts: tuple = ()

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("attempt index cannot be negative")
        if self.index == 0 and self.correction_kind is not None:
            raise ValueError("the first attempt is never a correction")
        if (self.cause is None) != self.report.success:
            raise ValueError("cause must be present exactly on failure")
        object.__setattr__(self, "prompts", tuple(self.prompts))


@dataclass(frozen=True)
class SessionLog:
    sample_id: str
    attempts: tuple
    feedback: FeedbackRecord
    final_success: bool
    corrections_used: int
    observation: object = None
    aborted_reason: str | None = None

    def __post_init__(self):
        attempts = tuple(self.attempts)
        object.__setattr__(self, "attempts", attempts)
        if attempts:
            if self.final_success != attempts[-1].report.success:
                raise ValueError("final_success must mirror the last attempt")
        elif self.final_success:
            raise ValueError("an empty session cannot have succeeded")
        used = sum(1 for a in attempts if a.correction_kind is not None)
        if used != self.corrections_used:
            raise ValueError("corrections_used must count corrected attempts")


def diagnose(trajectory: Trajectory, movement_epsilon: float = DEFAULT_MOVEMENT_EPSILON) -> Diagnosis:
    """Moved when the contact's path length reaches the motion floor."""
    positions = trajectory.positions()
    path = float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum())
    return Diagnosis.MOVED if path >= movement_epsilon else Diagnosis.NO_MOTION


def probe_normal(obj, observation, pixel, params: SessionParams) -> Trajectory:
    """Short pull along the surface normal at the pixel, from reset state.

    Probes are diagnostic: they cost no attempt and never carry prompts.
    """
    point = lift_pixel(observation, pixel)
    pid = int(observation.part_id[pixel[1], pixel[0]])
    normal = surface_normal(obj, pid, point)
    probe_pull = replace(params.pull,
                         total_distance=params.probe_scale * params.pull.total_distance)
    return execute_pull(obj, observation, Action(pixel, normal, Primitive.PULL),
                        probe_pull)


def build_position_cot(observation, action: Action, step: int) -> str:
    """Prompt text for one step of the five-step position chain of thought.

    Steps 1..3 interrogate the accumulated masks against the failed contact,
    step 4 asks for the new pose, step 5 checks it. Steps that reference a
    pixel read it from the given action.
    """
    if observation.mask_layer is None or not observation.mask_layer.any():
        raise NoMasks("position reasoning needs at least one accumulated mask")
    if step not in (1, 2, 3, 4, 5):
        raise ValueError(f"step must be 1..5, got {step}")
    u, v = action.contact_pixel
    if step == 1:
        return render_template("position_step1")
    if step == 2:
        return render_template("position_step2", u=u, v=v)
    if step == 3:
        return render_template("position_step3", u=u, v=v)
    if step == 4:
        return render_template("position_step4", instruction="adjust the contact")
    bins = encode_direction(action.gripper_direction)
    a, b, c = tuple(bins)
    return render_template("position_step5", u=u, v=v, a=a, b=b, c=c)


def build_rotation_prompt(joint_estimate: JointEstimate | None, contact_pixel,
                          normal_direction) -> tuple:
    """Rotation-correction prompt: joint kind plus binned axis and normal.

    Returns (fields, text); the fields are what a policy's correct_rotation
    consumes, the text is what gets logged and what a bridge peer sees.
    """
    if joint_estimate is None or joint_estimate.axis is None:
        raise NoEstimate("rotation correction needs a motion-bearing estimate")
    axis_bins = encode_direction(joint_estimate.axis)
    normal_bins = encode_direction(normal_direction)
    u, v = int(contact_pixel[0]), int(contact_pixel[1])
    fields = RotationPromptFields(kind=joint_estimate.kind,
                                  axis_bins=axis_bins,
                                  contact_pixel=(u, v),
                                  normal_bins=normal_bins)
    a, b, c = tuple(axis_bins)
    na, nb, nc = tuple(normal_bins)
    text = render_template("rotation", kind=joint_estimate.kind.value.lower(),
                           a=a, b=b, c=c, u=u, v=v, na=na, nb=nb, nc=nc)
    return fields, text


def _reset(obj, base_config):
    obj.config.clear()
    obj.config.update(base_config)


def _pixel_ok(observation, pixel, union):
    u, v = pixel
    h, w = observation.depth.shape
    if not (0 <= u < w and 0 <= v < h):
        return False
    if not observation.foreground[v, u]:
        return False
    return union is None or not union[v, u]


class _Session:
    """Working state for one run_session call."""

    def __init__(self, obj, camera, policy, instruction, params, sample_id):
        self.base_config = dict(obj.config)
        self.work = obj.clone()
        self.camera = camera
        self.policy = policy
        self.instruction = instruction
        self.params = params
        self.sample_id = sample_id
        _reset(self.work, self.base_config)
        self.observation = render(self.work, camera)
        self.feedback = FeedbackRecord()
        self.attempts = []

    # -- helpers --

    def masked_observation(self):
        if not self.feedback.masks:
            return self.observation
        union = self.feedback.mask_union(self.observation.depth.shape)
        return overlay_mask(self.observation, union)

    def mask_union_or_none(self):
        if not self.feedback.masks:
            return None
        return self.feedback.mask_union(self.observation.depth.shape)

    def fail(self, reason):
        log = self.finish(aborted_reason=reason)
        raise PolicyFailure(reason, session_log=log)

    def finish(self, aborted_reason=None) -> SessionLog:
        attempts = tuple(self.attempts)
        final = bool(attempts) and attempts[-1].report.success
        used = sum(1 for a in attempts if a.correction_kind is not None)
        return SessionLog(sample_id=self.sample_id, attempts=attempts,
                          feedback=self.feedback, final_success=final,
                          corrections_used=used, observation=self.observation,
                          aborted_reason=aborted_reason)

    def checked(self, producer, describe, union) -> tuple:
        """Run an action-producing call, re-asking once on a bad pixel.

        A ParseFailure surfacing here means the policy already burned its
        own re-ask on unparseable text, so the session aborts.
        """
        try:
            action, prompts = producer()
        except ParseFailure as exc:
            self.fail(f"{describe} answer unparseable: {exc}")
        if _pixel_ok(self.observation, action.contact_pixel, union):
            return action, prompts
        try:
            retry, retry_prompts = producer()
        except ParseFailure as exc:
            self.fail(f"{describe} answer unparseable on retry: {exc}")
        prompts = prompts + retry_prompts
        if _pixel_ok(self.observation, retry.contact_pixel, union):
            return retry, prompts
        self.attach_prompts(prompts)
        self.fail(f"{describe} returned unusable pixel "
                  f"{retry.contact_pixel} twice")

    def attach_prompts(self, prompts):
        # prompts gathered for an attempt that never ran still belong in the
        # log; hang them on the last recorded attempt so nothing is lost
        if prompts and self.attempts:
            last = self.attempts[-1]
            self.attempts[-1] = replace(last,
                                        prompts=last.prompts + tuple(prompts))

    # -- action producers --

    def initial_action(self):
        def ask():
            prompt = render_template("predict", instruction=self.instruction.text)
            action = self.policy.predict(self.observation, self.instruction)
            u, v = action.contact_pixel
            ex = PromptExchange(kind="predict", prompt=prompt,
                                response=f"({u}, {v})")
            return action, [ex]
        return self.checked(ask, "predict", union=None)

    def repredict(self):
        def ask():
            prompt = render_template("predict", instruction=self.instruction.text)
            action = self.policy.predict(self.masked_observation(),
                                         self.instruction)
            u, v = action.contact_pixel
            ex = PromptExchange(kind="predict", prompt=prompt,
                                response=f"({u}, {v})",
                                meta={"repredict": True})
            return action, [ex]
        return self.checked(ask, "re-predict", union=self.mask_union_or_none())

    def position_correction(self, failed_action):
        masked = self.masked_observation()
        union = self.mask_union_or_none()
        transcript = []
        for step in (1, 2, 3):
            kind = f"position_step{step}"
            prompt = build_position_cot(masked, failed_action, step)
            answer = self.policy.answer_vqa(
                kind, masked, {"pixel": failed_action.contact_pixel,
                               "prompt": prompt})
            transcript.append(PromptExchange(kind=kind, prompt=prompt,
                                             response=answer))

        def ask():
            local = list(transcript)
            step4 = PromptExchange(kind="position_step4",
                                   prompt=build_position_cot(masked,
                                                             failed_action, 4))
            local.append(step4)
            action = self.policy.correct_position(masked, local)
            u, v = action.contact_pixel
            bins = tuple(encode_direction(action.gripper_direction))
            step4.response = f"({u}, {v}), direction {bins}"
            return action, [local[-1]]

        action, step4_prompts = self.checked(ask, "position correction", union)
        prompts = transcript + step4_prompts
        step5_prompt = build_position_cot(masked, action, 5)
        step5_answer = self.policy.answer_vqa(
            "position_step5", masked, {"pixel": action.contact_pixel,
                                       "prompt": step5_prompt})
        prompts.append(PromptExchange(kind="position_step5",
                                      prompt=step5_prompt,
                                      response=step5_answer))
        return action, prompts

    def rotation_correction(self, failed_action, normal):
        estimate = estimate_joint(self.feedback.trajectories,
                                  angle_threshold=self.params.angle_threshold,
                                  movement_epsilon=self.params.movement_epsilon)
        self.feedback = self.feedback.with_estimate(estimate)
        if estimate.axis is None:
            return None, []
        fields, text = build_rotation_prompt(estimate,
                                             failed_action.contact_pixel,
                                             normal)
        bins = self.policy.correct_rotation(fields)
        direction = decode_direction(bins)
        ex = PromptExchange(kind="rotation", prompt=text,
                            response=f"{tuple(bins)}")
        action = Action(failed_action.contact_pixel, direction,
                        failed_action.primitive)
        return action, [ex]

    # -- the loop --

    def run(self) -> SessionLog:
        params = self.params
        action, prompts = self.initial_action()
        correction_kind = None
        for index in range(params.n_corrections + 1):
            _reset(self.work, self.base_config)
            traj = execute_pull(self.work, self.observation, action,
                                params.pull)
            part = self.work.part(traj.contacted_part)
            report = evaluate_success(traj, part.joint,
                                      action.gripper_direction, params.metric)
            self.feedback = self.feedback.with_trajectory(traj)
            cause, movable = (None, None)
            if not report.success:
                cause, movable = self.classify_failure(action, traj)
            self.attempts.append(AttemptRecord(
                index, action, traj, report, cause, correction_kind,
                tuple(prompts)))
            if report.success:
                break
            next_action, next_kind, next_prompts = \
                self.derive_next(cause, movable, action, index)
            if next_action is None:
                break
            action, correction_kind, prompts = \
                next_action, next_kind, next_prompts
        return self.finish()

    def classify_failure(self, action, traj):
        """Name the failure, probing dead contacts; no policy calls here.

        Runs for every failed attempt, the last one included, so causes and
        masks are complete even when no retries remain.
        """
        params = self.params
        if diagnose(traj, params.movement_epsilon) is Diagnosis.MOVED:
            return FailureCause.MOVED, None

        _reset(self.work, self.base_config)
        probe_traj = probe_normal(self.work, self.observation,
                                  action.contact_pixel, params)
        self.feedback = self.feedback.with_trajectory(probe_traj)
        if diagnose(probe_traj, params.movement_epsilon) is Diagnosis.MOVED:
            return FailureCause.NO_MOTION_PROBE_MOVED, None

        _reset(self.work, self.base_config)
        movable = movability_query(self.work, self.observation,
                                   action.contact_pixel)
        if not movable:
            mask = segment_unmovable(self.work, self.observation,
                                     action.contact_pixel)
            self.feedback = accumulate(self.feedback, mask)
        return FailureCause.NO_MOTION_CONTACT_INVALID, movable

    def derive_next(self, cause, movable, action, index):
        """Pick the correction the cause calls for, honoring the toggles."""
        params = self.params
        if index >= params.n_corrections:
            return None, None, []
        if cause in (FailureCause.MOVED, FailureCause.NO_MOTION_PROBE_MOVED):
            if not params.rotation_correction:
                return None, None, []
            return self.try_rotation(action)
        if not movable:
            if not params.position_correction:
                return None, None, []
            new_action, prompts = self.position_correction(action)
            return new_action, CorrectionKind.POSITION, prompts
        # the part is movable yet nothing budged, even along the normal:
        # reuse the position chain when masks exist, otherwise ask again
        if self.feedback.masks and params.position_correction:
            new_action, prompts = self.position_correction(action)
            return new_action, CorrectionKind.POSITION, prompts
        new_action, prompts = self.repredict()
        return new_action, None, prompts

    def try_rotation(self, action):
        _reset(self.work, self.base_config)
        point = lift_pixel(self.observation, action.contact_pixel)
        pid = int(self.observation.part_id[action.contact_pixel[1],
                                           action.contact_pixel[0]])
        normal = surface_normal(self.work, pid, point)
        try:
            new_action, prompts = self.rotation_correction(action, normal)
        except ParseFailure as exc:
            self.fail(f"rotation correction answer unparseable: {exc}")
        except ArtisimError:
            # a degenerate estimate offers nothing to correct with
            return None, None, []
        if new_action is None:
            return None, None, []
        return new_action, CorrectionKind.ROTATION, prompts


def run_session(obj, camera, policy, instruction,
                params: SessionParams | None = None,
                sample_id: str = "session") -> SessionLog:
    """Run one full correction session against a fresh clone of the object."""
    return _Session(obj, camera, policy, instruction,
                    params or SessionParams(), sample_id).run()


# -- serialization (deterministic, replay-comparable) --


def _action_to_dict(action: Action) -> dict:
    return {"pixel": list(action.contact_pixel),
            "direction": [float(x) for x in action.gripper_direction],
            "primitive": action.primitive.value}


def _action_from_dict(d: dict) -> Action:
    return Action(tuple(d["pixel"]), np.array(d["direction"]),
                  Primitive(d["primitive"]))


def _trajectory_to_dict(traj: Trajectory) -> dict:
    return {"poses": [[float(x) for x in row] for row in traj.as_rows()],
            "contacted_part": traj.contacted_part,
            "q_before": float(traj.q_before),
            "q_after": float(traj.q_after)}


def _trajectory_from_dict(d: dict) -> Trajectory:
    return Trajectory.from_rows(np.array(d["poses"]), d["contacted_part"],
                                d["q_before"], d["q_after"])


def _report_to_dict(report: SuccessReport) -> dict:
    return {"success": bool(report.success),
            "delta_q": float(report.delta_q),
            "range_fraction": float(report.range_fraction),
            "direction_dot": float(report.direction_dot)}


def _report_from_dict(d: dict) -> SuccessReport:
    return SuccessReport(d["success"], d["delta_q"], d["range_fraction"],
                         d["direction_dot"])


def _attempt_to_dict(a: AttemptRecord) -> dict:
    return {"index": a.index,
            "action": _action_to_dict(a.action),
            "trajectory": _trajectory_to_dict(a.trajectory),
            "report": _report_to_dict(a.report),
            "cause": a.cause.value if a.cause else None,
            "correction_kind": (a.correction_kind.value
                                if a.correction_kind else None),
            "prompts": [p.to_dict() for p in a.prompts]}


def _attempt_from_dict(d: dict) -> AttemptRecord:
    return AttemptRecord(
        index=d["index"],
        action=_action_from_dict(d["action"]),
        trajectory=_trajectory_from_dict(d["trajectory"]),
        report=_report_from_dict(d["report"]),
        cause=FailureCause(d["cause"]) if d["cause"] else None,
        correction_kind=(CorrectionKind(d["correction_kind"])
                         if d["correction_kind"] else None),
        prompts=tuple(PromptExchange.from_dict(p) for p in d["prompts"]))


def _feedback_to_dict(fb: FeedbackRecord) -> dict:
    estimate = None
    if fb.joint_estimate is not None:
        est = fb.joint_estimate
        estimate = {"kind": est.kind.value,
                    "axis": ([float(x) for x in est.axis]
                             if est.axis is not None else None),
                    "confidence": float(est.confidence)}
    return {"estimate": estimate,
            "masks": [{"rle": rle_encode(m.pixels),
                       "source_pixel": list(m.source_pixel)}
                      for m in fb.masks],
            "trajectories": [_trajectory_to_dict(t) for t in fb.trajectories]}


def _feedback_from_dict(d: dict) -> FeedbackRecord:
    estimate = None
    if d["estimate"] is not None:
        e = d["estimate"]
        axis = np.array(e["axis"]) if e["axis"] is not None else None
        estimate = JointEstimate(MotionClass(e["kind"]), axis, e["confidence"])
    masks = tuple(Mask(pixels=rle_decode(m["rle"]),
                       source_pixel=tuple(m["source_pixel"]))
                  for m in d["masks"])
    trajectories = tuple(_trajectory_from_dict(t) for t in d["trajectories"])
    return FeedbackRecord(joint_estimate=estimate, masks=masks,
                          trajectories=trajectories)


def session_to_dict(log: SessionLog) -> dict:
    return {"sample_id": log.sample_id,
            "attempts": [_attempt_to_dict(a) for a in log.attempts],
            "feedback": _feedback_to_dict(log.feedback),
            "final_success": bool(log.final_success),
            "corrections_used": log.corrections_used,
            "aborted_reason": log.aborted_reason}


def session_from_dict(d: dict) -> SessionLog:
    return SessionLog(sample_id=d["sample_id"],
                      attempts=tuple(_attempt_from_dict(a)
                                     for a in d["attempts"]),
                      feedback=_feedback_from_dict(d["feedback"]),
                      final_success=d["final_success"],
                      corrections_used=d["corrections_used"],
                      aborted_reason=d["aborted_reason"])


def session_to_json(log: SessionLog) -> str:
    return json.dumps(session_to_dict(log), sort_keys=True,
                      separators=(",", ":"))


def session_from_json(text: str) -> SessionLog:
    return session_from_dict(json.loads(text))

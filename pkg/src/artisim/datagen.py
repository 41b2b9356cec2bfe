"""Generate interaction episodes and VQA-style training records.

Episodes come from rejection sampling: random foreground contacts and
random gripper directions are executed until enough of them succeed.
Directions are snapped to their bin-center decode before execution, and a
candidate is kept only when its bins are a round-trip fixed point of
encode/decode, so every direction a record carries can be reproduced
exactly from the bins alone.

Each kept episode is then expanded into four record kinds: a yes/no mask
classification pair, pixel-level mask membership queries, a masked re-pick
of the successful pose, and a rotation-correction query built from a
noise-injected joint axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assets import ArticulatedObject, object_to_doc
from .correction import (
    _action_from_dict,
    _action_to_dict,
    _report_from_dict,
    _report_to_dict,
    _trajectory_from_dict,
    _trajectory_to_dict,
)
from .errors import ExhaustedBudget, NotOnSurface
from .feedback import rle_encode
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
from .kinematics import normalize, rotation_matrix
from .policy import decode_direction, encode_direction
from .prompts import render_template
from .scene import Camera, lift_pixel, render, surface_normal

MAX_NOISE_ANGLE = np.deg2rad(20.0)

RECORD_KINDS = (
    "MaskClassification",
    "MaskPositionReasoning",
    "CorrectBasedOnMask",
    "RotationCorrection",
)


@dataclass(frozen=True)
class EpisodeSample:
    """One successful interaction, replayable from the stored fields."""

    sample_id: str
    object_name: str
    config: dict
    action: Action
    trajectory: Trajectory
    report: SuccessReport

    def __post_init__(self):
        object.__setattr__(self, "config", dict(self.config))


@dataclass(frozen=True)
class VqaRecord:
    """A prompt/answer pair with the structured ground truth behind it."""

    kind: str
    sample_id: str
    prompt: str
    answer: str
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}")


@dataclass(frozen=True)
class DatagenParams:
    """Budget and augmentation knobs for one sampling run."""

    max_trials_per_episode: int = 200
    n_position_pixels: int = 20
    pull: PullParams = field(default_factory=PullParams)
    metric: MetricParams = field(default_factory=MetricParams)

    def __post_init__(self):
        if self.max_trials_per_episode < 1:
            raise ValueError("max_trials_per_episode must be at least 1")
        if self.n_position_pixels < 1:
            raise ValueError("n_position_pixels must be at least 1")


def _canonical_bins(v) -> tuple | None:
    """Bins for v when they survive a decode/encode round trip, else None."""

    try:
        bins = encode_direction(normalize(np.asarray(v, dtype=float)))
    except Exception:
        return None
    if encode_direction(decode_direction(bins)) != bins:
        return None
    return tuple(bins)


def inject_axis_noise(axis, rng: np.random.Generator, max_angle: float = MAX_NOISE_ANGLE):
    """Tilt axis by an angle drawn uniformly from [-max_angle, max_angle].

    The rotation axis is a random direction perpendicular to the input, so
    the angle between the result and the input equals the drawn magnitude
    exactly. Returns (noisy_axis, theta).
    """

    a = normalize(np.asarray(axis, dtype=float))
    theta = float(rng.uniform(-max_angle, max_angle))
    while True:
        raw = rng.normal(size=3)
        perp = raw - np.dot(raw, a) * a
        if np.linalg.norm(perp) > 1e-9:
            break
    noisy = rotation_matrix(normalize(perp), theta) @ a
    return normalize(noisy), theta


def sample_successful_episodes(
    obj: ArticulatedObject,
    camera: Camera,
    count: int,
    rng: np.random.Generator,
    params: DatagenParams | None = None,
    id_prefix: str = "ep",
):
    """Rejection-sample `count` successful episodes on obj.

    Candidates draw a uniform foreground pixel, a random direction snapped
    to its bin center, and a primitive from {Pull, Push}. A candidate is
    kept when its bins round-trip, the surface normal at the contact is
    bin-representable, and executing the snapped direction succeeds.
    Returns (episodes, acceptance_rate); raises ExhaustedBudget when the
    trial budget runs out first.
    """

    params = params or DatagenParams()
    observation = render(obj, camera)
    foreground = np.argwhere(observation.part_id >= 0)
    if foreground.size == 0:
        raise ExhaustedBudget("nothing visible to sample contacts from")
    budget = params.max_trials_per_episode * count
    episodes: list[EpisodeSample] = []
    trials = 0
    while len(episodes) < count:
        if trials >= budget:
            raise ExhaustedBudget(
                f"{trials} trials yielded {len(episodes)} of {count} episodes"
            )
        trials += 1
        v, u = foreground[rng.integers(len(foreground))]
        pixel = (int(u), int(v))
        raw = rng.normal(size=3)
        if np.linalg.norm(raw) < 1e-12:
            continue
        bins = _canonical_bins(raw)
        if bins is None:
            continue
        direction = decode_direction(bins)
        primitive = Primitive.PULL if rng.random() < 0.5 else Primitive.PUSH
        part_id = int(observation.part_id[v, u])
        part = obj.part(part_id)
        if not part.movable:
            continue
        try:
            point = lift_pixel(observation, pixel)
            if _canonical_bins(surface_normal(obj, part_id, point)) is None:
                continue
        except NotOnSurface:
            continue
        work = obj.clone()
        action = Action(pixel, direction, primitive)
        trajectory = execute_pull(work, observation, action, params.pull)
        report = evaluate_success(trajectory, part.joint, direction, params.metric)
        if not report.success:
            continue
        episodes.append(
            EpisodeSample(
                sample_id=f"{id_prefix}-{len(episodes):04d}",
                object_name=obj.name,
                config=dict(obj.config),
                action=action,
                trajectory=trajectory,
                report=report,
            )
        )
    return episodes, len(episodes) / trials


def _static_mask(obj: ArticulatedObject, observation, rng: np.random.Generator):
    """Boolean mask over a uniformly chosen visible static part."""

    visible = np.unique(observation.part_id[observation.part_id >= 0])
    static = [int(pid) for pid in visible if not obj.part(int(pid)).movable]
    if not static:
        return None, None
    pid = static[int(rng.integers(len(static)))]
    return observation.part_id == pid, pid


def _format_pixels(pixels) -> str:
    return "; ".join(f"({u}, {v})" for u, v in pixels)


def augment(
    obj: ArticulatedObject,
    camera: Camera,
    episodes,
    rng: np.random.Generator,
    params: DatagenParams | None = None,
):
    """Expand episodes into the four VQA record kinds.

    Skips the mask-dependent kinds for objects with no visible static part;
    every emitted answer is reproducible from the record's data dict.
    """

    params = params or DatagenParams()
    records: list[VqaRecord] = []
    for episode in episodes:
        work = obj.clone()
        work.config.update(episode.config)
        observation = render(work, camera)
        mask, mask_pid = _static_mask(work, observation, rng)
        u, v = episode.action.contact_pixel
        bins = tuple(encode_direction(episode.action.gripper_direction))
        instruction = f"{episode.action.primitive.value} the movable part"

        if mask is not None:
            rle = rle_encode(mask)
            cls_prompt = render_template("mask_classification")
            records.append(
                VqaRecord(
                    kind="MaskClassification",
                    sample_id=episode.sample_id,
                    prompt=cls_prompt,
                    answer="Yes",
                    data={"mask": rle, "mask_part": mask_pid, "masked": True},
                )
            )
            records.append(
                VqaRecord(
                    kind="MaskClassification",
                    sample_id=episode.sample_id,
                    prompt=cls_prompt,
                    answer="No",
                    data={"masked": False},
                )
            )

            h, w = observation.depth.shape
            pts = [
                (int(rng.integers(w)), int(rng.integers(h)))
                for _ in range(params.n_position_pixels)
            ]
            labels = [bool(mask[pv, pu]) for pu, pv in pts]
            records.append(
                VqaRecord(
                    kind="MaskPositionReasoning",
                    sample_id=episode.sample_id,
                    prompt=render_template("mask_position", pixels=_format_pixels(pts)),
                    answer=", ".join("Yes" if on else "No" for on in labels),
                    data={
                        "mask": rle,
                        "pixels": [list(p) for p in pts],
                        "labels": labels,
                    },
                )
            )

            if mask[v, u]:
                raise AssertionError("static mask covered a successful contact")
            records.append(
                VqaRecord(
                    kind="CorrectBasedOnMask",
                    sample_id=episode.sample_id,
                    prompt=render_template("correct_based_on_mask", instruction=instruction),
                    answer=f"({u}, {v}) with direction {bins}",
                    data={"mask": rle, "pixel": [u, v], "bins": list(bins)},
                )
            )

        part = work.part(int(observation.part_id[v, u]))
        noisy_axis = None
        while noisy_axis is None:
            candidate, theta = inject_axis_noise(part.joint.axis, rng)
            axis_bins = _canonical_bins(candidate)
            if axis_bins is not None:
                noisy_axis = candidate
        normal = surface_normal(work, part.id, lift_pixel(observation, (u, v)))
        normal_bins = tuple(encode_direction(normal))
        records.append(
            VqaRecord(
                kind="RotationCorrection",
                sample_id=episode.sample_id,
                prompt=render_template(
                    "rotation",
                    kind=part.joint.kind.value,
                    a=axis_bins[0],
                    b=axis_bins[1],
                    c=axis_bins[2],
                    u=u,
                    v=v,
                    na=normal_bins[0],
                    nb=normal_bins[1],
                    nc=normal_bins[2],
                ),
                answer=f"{bins}",
                data={
                    "joint_kind": part.joint.kind.value,
                    "axis_bins": list(axis_bins),
                    "noise_angle": theta,
                    "normal_bins": list(normal_bins),
                    "answer_bins": list(bins),
                },
            )
        )
    return records


def episode_to_dict(episode: EpisodeSample) -> dict:
    return {
        "sample_id": episode.sample_id,
        "object_name": episode.object_name,
        "config": {str(k): v for k, v in episode.config.items()},
        "action": _action_to_dict(episode.action),
        "trajectory": _trajectory_to_dict(episode.trajectory),
        "report": _report_to_dict(episode.report),
    }


def episode_from_dict(d: dict) -> EpisodeSample:
    return EpisodeSample(
        sample_id=d["sample_id"],
        object_name=d["object_name"],
        config={int(k): float(v) for k, v in d["config"].items()},
        action=_action_from_dict(d["action"]),
        trajectory=_trajectory_from_dict(d["trajectory"]),
        report=_report_from_dict(d["report"]),
    )


def record_to_dict(record: VqaRecord) -> dict:
    return {
        "kind": record.kind,
        "sample_id": record.sample_id,
        "prompt": record.prompt,
        "answer": record.answer,
        "data": record.data,
    }


def record_from_dict(d: dict) -> VqaRecord:
    return VqaRecord(
        kind=d["kind"],
        sample_id=d["sample_id"],
        prompt=d["prompt"],
        answer=d["answer"],
        data=d.get("data", {}),
    )


def _dump(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def write_corpus(
    out_dir,
    objects,
    camera: Camera,
    episodes_per_object: int,
    seed: int,
    params: DatagenParams | None = None,
):
    """Sample and augment every object, writing a self-describing corpus.

    Layout: manifest.json, objects/<name>.json, episodes.jsonl,
    records.jsonl. Output bytes are a pure function of
    (objects, camera, episodes_per_object, seed, params).
    """

    params = params or DatagenParams()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "objects").mkdir(exist_ok=True)

    episode_lines = []
    record_lines = []
    per_object = []
    for idx, obj in enumerate(objects):
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        episodes, acceptance = sample_successful_episodes(
            obj, camera, episodes_per_object, rng, params, id_prefix=f"{obj.name}-{idx}"
        )
        records = augment(obj, camera, episodes, rng, params)
        episode_lines.extend(_dump(episode_to_dict(e)) for e in episodes)
        record_lines.extend(_dump(record_to_dict(r)) for r in records)
        per_object.append(
            {
                "name": obj.name,
                "episodes": len(episodes),
                "records": len(records),
                "acceptance_rate": acceptance,
            }
        )
        (out / "objects" / f"{obj.name}.json").write_text(
            _dump(object_to_doc(obj)) + "\n"
        )

    (out / "episodes.jsonl").write_text("".join(line + "\n" for line in episode_lines))
    (out / "records.jsonl").write_text("".join(line + "\n" for line in record_lines))
    manifest = {
        "episodes_per_object": episodes_per_object,
        "n_position_pixels": params.n_position_pixels,
        "objects": per_object,
        "seed": seed,
        "total_episodes": len(episode_lines),
        "total_records": len(record_lines),
    }
    (out / "manifest.json").write_text(_dump(manifest) + "\n")
    return manifest

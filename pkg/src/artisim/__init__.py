"""Desk-scale articulated-object manipulation simulator with an interactive
failure-correction loop.

The usual entry points:

    from artisim import (front_camera, generate_suite, OraclePolicy,
                         Instruction, Primitive, run_session)

    obj = generate_suite(1, seed=0)[0]
    policy = OraclePolicy()
    policy.bind(obj)
    log = run_session(obj, front_camera(), policy,
                      Instruction(Primitive.PULL, "open the front"))

Submodules stay importable directly for the full surface (scene rendering,
feedback extraction, the bridge protocol, the bench harness).
"""

from .assets import (
    ArticulatedObject,
    Box,
    Joint,
    JointKind,
    Part,
    load_object,
    save_object,
)
from .bench import BenchConfig, emit_tables, replay, run_bench
from .bridge import BridgePolicy, ScriptedAnswerer, serve_stdio, serve_tcp
from .correction import (
    SessionLog,
    SessionParams,
    run_session,
    session_from_json,
    session_to_json,
)
from .datagen import augment, inject_axis_noise, sample_successful_episodes, write_corpus
from .errors import ArtisimError, ParseFailure, PolicyFailure, ProtocolViolation
from .feedback import FeedbackRecord, JointEstimate, MotionClass, estimate_joint
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
from .kinematics import SE3Pose
from .objects import (
    door_cabinet,
    drawer_cabinet,
    front_camera,
    generate_suite,
    load_suite,
    write_suite,
)
from .policy import (
    DirectionBins,
    Instruction,
    LearnablePolicy,
    OraclePolicy,
    PerturbedPolicy,
    PolicyBase,
    ScriptedPolicy,
    TtaSchedule,
    decode_direction,
    encode_direction,
    tta_step,
)
from .scene import Camera, Observation, export_observation, render

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ArticulatedObject",
    "ArtisimError",
    "BenchConfig",
    "Box",
    "BridgePolicy",
    "Camera",
    "DirectionBins",
    "FeedbackRecord",
    "Instruction",
    "Joint",
    "JointEstimate",
    "JointKind",
    "LearnablePolicy",
    "MetricParams",
    "MotionClass",
    "Observation",
    "OraclePolicy",
    "ParseFailure",
    "Part",
    "PerturbedPolicy",
    "PolicyBase",
    "PolicyFailure",
    "Primitive",
    "ProtocolViolation",
    "PullParams",
    "SE3Pose",
    "ScriptedAnswerer",
    "ScriptedPolicy",
    "SessionLog",
    "SessionParams",
    "SuccessReport",
    "Trajectory",
    "TtaSchedule",
    "augment",
    "decode_direction",
    "door_cabinet",
    "drawer_cabinet",
    "emit_tables",
    "encode_direction",
    "estimate_joint",
    "evaluate_success",
    "execute_pull",
    "export_observation",
    "front_camera",
    "generate_suite",
    "inject_axis_noise",
    "load_object",
    "load_suite",
    "render",
    "replay",
    "run_bench",
    "run_session",
    "sample_successful_episodes",
    "save_object",
    "serve_stdio",
    "serve_tcp",
    "session_from_json",
    "session_to_json",
    "tta_step",
    "write_corpus",
    "write_suite",
]

"""Acceptance gate: one test per top-level behavioral criterion.

Each test prints a single [PASS]/[FAIL] line with its measured numbers
(run with -s to see them as they happen). Thresholds, sample sizes, and
runtime budgets are stated inline next to each check.
"""

import time
from statistics import median

import numpy as np
import pytest

from artisim.bench import DETERMINISTIC_FILES, BenchConfig, run_bench
from artisim.correction import SessionParams, run_session
from artisim.errors import PolicyFailure
from artisim.feedback import (
    MotionClass,
    classify_joint,
    estimate_axis_multi,
    estimate_axis_single,
)
from artisim.interaction import (
    Joint,
    JointKind,
    MetricParams,
    Primitive,
    SE3Pose,
    Trajectory,
    evaluate_success,
)
from artisim.kinematics import normalize, rotation_matrix
from artisim.objects import door_cabinet, front_camera, generate_suite
from artisim.policy import (
    Instruction,
    LearnablePolicy,
    OraclePolicy,
    TtaSchedule,
    decode_direction,
    encode_direction,
    tta_step,
)
from artisim.scene import movable_map, render

PULL = Instruction(Primitive.PULL, "open the front of the cabinet")


def verdict(name: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def synthetic_trajectory(positions, q_before=0.0, q_after=0.0) -> Trajectory:
    poses = tuple(SE3Pose(p, (0.0, 0.0, 0.0, 1.0))
                  for p in np.asarray(positions, dtype=float))
    return Trajectory(poses, contacted_part=1, q_before=q_before,
                      q_after=q_after)


def arc_trajectory(rng, axis, center, radius, span, n=20, noise=0.0):
    axis = normalize(np.asarray(axis, dtype=float))
    seed = rng.normal(size=3)
    start = normalize(seed - np.dot(seed, axis) * axis) * radius
    pts = np.array([center + rotation_matrix(axis, span * k / (n - 1)) @ start
                    for k in range(n)])
    if noise:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return synthetic_trajectory(pts)


class TestAxisEstimation:
    def test_01_axis_estimation(self):
        # noiseless: 500 random hinges, one 20-frame arc each, spans drawn
        # from [5 deg, 90 deg] -> angular error <= 1e-6 rad; noisy: point
        # noise sigma=1e-3, three arcs per hinge, spans [10, 60] deg ->
        # median error < 5 deg; both under a shared 10 s budget
        rng = np.random.default_rng(42)
        started = time.perf_counter()
        worst = 0.0
        for _ in range(500):
            axis = normalize(rng.normal(size=3))
            center = rng.uniform(-1.0, 1.0, 3)
            span = rng.uniform(np.deg2rad(5.0), np.deg2rad(90.0))
            estimate = estimate_axis_single(
                arc_trajectory(rng, axis, center, rng.uniform(0.3, 1.0), span))
            worst = max(worst, float(
                np.arccos(np.clip(np.dot(estimate, axis), -1.0, 1.0))))
        errors = []
        for _ in range(500):
            axis = normalize(rng.normal(size=3))
            center = rng.uniform(-1.0, 1.0, 3)
            arcs = [arc_trajectory(rng, axis, center, rng.uniform(0.3, 1.0),
                                   rng.uniform(np.deg2rad(10.0), np.deg2rad(60.0)),
                                   noise=1e-3)
                    for _ in range(3)]
            estimate = estimate_axis_multi(arcs, MotionClass.REVOLUTE)
            errors.append(float(np.degrees(
                np.arccos(np.clip(np.dot(estimate, axis), -1.0, 1.0)))))
        elapsed = time.perf_counter() - started
        noisy_median = median(errors)
        ok = worst <= 1e-6 and noisy_median < 5.0 and elapsed < 10.0
        verdict("axis estimation", ok,
                f"noiseless max {worst:.2e} rad, noisy median "
                f"{noisy_median:.2f} deg, {elapsed:.1f} s")


class TestJointClassification:
    def test_02_joint_classification(self):
        # operating point: lines 1.5-2.5 m, arcs spanning 180-300 deg at
        # radius 0.5-1.0, 20 frames, turn threshold 8 deg (between the
        # noise ceiling on straight steps and the per-step arc turn);
        # noiseless must be perfect, sigma=1e-3 must stay >= 95%
        rng = np.random.default_rng(43)
        threshold = np.deg2rad(8.0)
        started = time.perf_counter()
        clean = noisy = 0
        for _ in range(500):
            direction = normalize(rng.normal(size=3))
            length = rng.uniform(1.5, 2.5)
            pts = np.linspace(0.0, length, 20)[:, None] * direction
            clean += classify_joint(
                synthetic_trajectory(pts), threshold) is MotionClass.PRISMATIC
            jittered = pts + rng.normal(scale=1e-3, size=pts.shape)
            noisy += classify_joint(
                synthetic_trajectory(jittered), threshold) is MotionClass.PRISMATIC
        for _ in range(500):
            axis = normalize(rng.normal(size=3))
            span = rng.uniform(np.deg2rad(180.0), np.deg2rad(300.0))
            clean += classify_joint(
                arc_trajectory(rng, axis, rng.uniform(-1, 1, 3),
                               rng.uniform(0.5, 1.0), span),
                threshold) is MotionClass.REVOLUTE
            noisy += classify_joint(
                arc_trajectory(rng, axis, rng.uniform(-1, 1, 3),
                               rng.uniform(0.5, 1.0), span, noise=1e-3),
                threshold) is MotionClass.REVOLUTE
        elapsed = time.perf_counter() - started
        ok = clean == 1000 and noisy >= 950 and elapsed < 10.0
        verdict("joint classification", ok,
                f"noiseless {clean}/1000, noisy {noisy}/1000, {elapsed:.1f} s")


class TestSuccessMetric:
    # columns: delta q, joint range, direction dot, moved at all, expected
    # rule: success iff (|dq| > 0.01 OR |dq|/(hi-lo) > 0.5) AND dot > 0.3,
    # all comparisons strict; no movement forces the dot term to 0
    CASES = [
        (0.05, (0.0, 0.2), 1.0, True, True, "clear travel, aligned"),
        (0.015, (0.0, 1.0), 0.9, True, True, "travel clause only"),
        (0.008, (0.0, 0.012), 0.9, True, True, "range-fraction clause only"),
        (0.008, (0.0, 0.1), 0.9, True, False, "neither clause"),
        (0.01, (0.0, 0.015), 0.9, True, True, "travel at boundary, fraction saves"),
        (0.01, (0.0, 0.1), 0.9, True, False, "travel exactly 0.01 is not enough"),
        (0.005, (0.0, 0.01), 0.9, True, False, "fraction exactly 0.5 is not enough"),
        (0.05, (0.0, 0.2), 0.3, True, False, "dot exactly 0.3 is not enough"),
        (0.05, (0.0, 0.2), 0.31, True, True, "dot just above threshold"),
        (0.05, (0.0, 0.2), -0.9, True, False, "moved against the grip"),
        (-0.05, (-0.2, 0.0), 0.9, True, True, "negative travel counts by magnitude"),
        (0.05, (0.0, 0.2), 0.0, True, False, "orthogonal grip"),
        (0.05, (0.0, 0.2), 1.0, False, False, "no observed movement"),
        (0.0, (0.0, 0.2), 1.0, True, False, "no joint travel"),
    ]

    def test_03_success_metric_table(self):
        failures = []
        for dq, (lo, hi), dot, moved, expected, label in self.CASES:
            joint = Joint(kind=JointKind.PRISMATIC, origin=(0.0, 0.0, 0.0),
                          axis=(0.0, 0.0, 1.0), range=(lo, hi))
            if moved:
                pts = [(0.0, 0.0, 0.02 * i) for i in range(5)]
            else:
                pts = [(0.0, 0.0, 0.0)] * 5
            trajectory = synthetic_trajectory(pts, q_before=0.0, q_after=dq)
            grip = np.array([np.sqrt(max(0.0, 1.0 - dot * dot)), 0.0, dot])
            report = evaluate_success(trajectory, joint, grip, MetricParams())
            if report.success is not expected:
                failures.append(label)
        ok = not failures and len(self.CASES) >= 12
        verdict("success metric table", ok,
                f"{len(self.CASES) - len(failures)}/{len(self.CASES)} cases"
                + (f", failed: {failures}" if failures else ""))


class TestDiscretization:
    def test_04_direction_discretization(self):
        # exhaustive scan: every bin boundary, each vector component,
        # probes 1e-9 on either side embedded in a unit vector; checks the
        # landing bin, the raw-center error budget of half a bin, and that
        # one decode/encode pass reaches a round-trip fixed point
        eps = 1e-9
        worst_center_err = 0.0
        checked = 0
        ok = True
        for comp in range(3):
            for k in range(101):
                for sign in (-eps, eps):
                    x = float(np.clip(-1.0 + 0.02 * k + sign, -1.0, 1.0))
                    rest = np.sqrt(max(0.0, (1.0 - x * x) / 2.0))
                    v = np.zeros(3)
                    v[comp] = x
                    v[(comp + 1) % 3] = rest
                    v[(comp + 2) % 3] = rest
                    bins = tuple(encode_direction(v))
                    want = min(max(k - 1, 0), 99) if sign < 0 else min(k, 99)
                    if bins[comp] != want:
                        ok = False
                    centers = -1.0 + 0.02 * np.asarray(bins) + 0.01
                    worst_center_err = max(worst_center_err,
                                           float(np.max(np.abs(centers - v))))
                    canonical = encode_direction(decode_direction(
                        encode_direction(v)))
                    if encode_direction(decode_direction(canonical)) != canonical:
                        ok = False
                    checked += 1
        ok = ok and worst_center_err <= 0.01 + 2 * eps
        verdict("direction discretization", ok,
                f"{checked} boundary probes, max center error "
                f"{worst_center_err:.6f}")


ARMS = {
    "full": (True, True),
    "no_position": (False, True),
    "no_rotation": (True, False),
    "none": (False, False),
}


@pytest.fixture(scope="module")
def ablation_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance-bench")
    runs = {}
    elapsed = {}
    for name, (position, rotation) in ARMS.items():
        config = BenchConfig(
            suite_count=20, suite_seed=5, episodes_per_object=10,
            seeds=tuple(range(10)), n_corrections=4,
            policy={"kind": "perturbed", "p_static": 0.4, "sigma_dir": 0.6},
            position_correction=position, rotation_correction=rotation)
        started = time.perf_counter()
        runs[name] = run_bench(config, out / name)
        elapsed[name] = time.perf_counter() - started
    return runs, elapsed


class TestCorrectionTrend:
    def test_05_correction_trend(self, ablation_runs):
        # perturbed policy (p_static=0.4, sigma=0.6 rad), 20 objects x 10
        # episodes, 4 corrections: per-seed cumulative curve must be
        # non-decreasing and the median final-vs-initial gain >= 20 points
        runs, elapsed = ablation_runs
        report = runs["full"].report
        monotone = True
        gains = []
        for entry in report["per_seed"]:
            rates = [p["rate"] for p in entry["curve"]]
            if any(b < a for a, b in zip(rates, rates[1:])):
                monotone = False
            gains.append(rates[-1] - rates[0])
        gain = median(gains)
        ok = monotone and gain >= 0.20 and elapsed["full"] < 120.0
        verdict("correction trend", ok,
                f"median gain {gain * 100:.1f} points over 10 seeds, "
                f"monotone={monotone}, {elapsed['full']:.1f} s")


class TestAblationOrdering:
    def test_06_ablation_ordering(self, ablation_runs):
        # median per-seed success: full >= each single ablation >= none
        runs, _ = ablation_runs
        rates = {name: median(e["success_rate"]
                              for e in runs[name].report["per_seed"])
                 for name in ARMS}
        ok = (rates["full"] >= rates["no_position"] >= rates["none"]
              and rates["full"] >= rates["no_rotation"] >= rates["none"])
        verdict("ablation ordering", ok,
                "full {full:.3f} >= no_position {no_position:.3f} / "
                "no_rotation {no_rotation:.3f} >= none {none:.3f}".format(**rates))


class TestTtaImprovement:
    @staticmethod
    def _door_family():
        out = []
        for i in range(5):
            rng = np.random.default_rng(np.random.SeedSequence([77, i]))
            out.append(door_cabinet(
                f"fam-door-{i}",
                width=float(rng.uniform(0.35, 0.55)),
                height=float(rng.uniform(0.3, 0.5)),
                depth=float(rng.uniform(0.25, 0.4)),
                max_open=float(rng.uniform(0.9, 1.5)),
                hinge_side="left" if i % 2 == 0 else "right"))
        return out

    def test_07_tta_improvement(self):
        # learnable policy, 40-session ordered stream over one door
        # family, adaptation threading through: median over 10 seeds of
        # (second-half success - first-half success) must be >= 0; the
        # paper-scale schedule values are checked exactly
        camera = front_camera()
        family = self._door_family()
        params = SessionParams()
        diffs = []
        corrections = [0, 0]
        for seed in range(10):
            policy = LearnablePolicy(seed=seed)
            schedule = policy.default_schedule()
            counter = 0
            successes = []
            for idx, (obj, ep) in enumerate(
                    [(o, e) for o in family for e in range(8)]):
                sample_id = f"tta-{seed}-{obj.name}-{ep}"
                try:
                    log = run_session(obj, camera, policy, PULL, params,
                                      sample_id=sample_id)
                    successes.append(log.final_success)
                except PolicyFailure as exc:
                    log = exc.session_log
                    successes.append(False)
                corrections[idx // 20] += log.corrections_used
                policy, counter = tta_step(policy, log, schedule, counter)
            first = sum(successes[:20]) / 20.0
            second = sum(successes[20:]) / 20.0
            diffs.append(second - first)
        schedule = TtaSchedule()
        exact = schedule.lr(0) == 5e-8 and schedule.lr(300) == 1.5e-8
        gain = median(diffs)
        ok = gain >= 0.0 and exact
        verdict("tta improvement", ok,
                f"median half-gap {gain * 100:+.1f} points over 10 seeds, "
                f"corrections spent {corrections[0]} -> {corrections[1]}, "
                f"lr(0)={schedule.lr(0):.1e}, lr(300)={schedule.lr(300):.2e}")


class TestOracleSanity:
    def test_08_oracle_sanity(self):
        # the oracle must solve every suite object on the first attempt
        camera = front_camera()
        suite = generate_suite(20, seed=5)
        clean = 0
        for obj in suite:
            observation = render(obj, camera)
            assert movable_map(obj, observation).any(), obj.name
            policy = OraclePolicy()
            policy.bind(obj)
            log = run_session(obj, camera, policy, PULL, sample_id=obj.name)
            if log.final_success and log.corrections_used == 0 \
                    and len(log.attempts) == 1:
                clean += 1
        ok = clean == len(suite)
        verdict("oracle sanity", ok,
                f"{clean}/{len(suite)} objects solved at 0 corrections")


class TestDeterminism:
    def test_09_determinism(self, tmp_path):
        config = BenchConfig(
            suite_count=4, suite_seed=5, episodes_per_object=3, seeds=(0, 1),
            policy={"kind": "perturbed", "p_static": 0.4, "sigma_dir": 0.6})
        run_bench(config, tmp_path / "first")
        run_bench(config, tmp_path / "second")
        mismatched = [
            name for name in DETERMINISTIC_FILES
            if ((tmp_path / "first" / name).read_bytes()
                != (tmp_path / "second" / name).read_bytes())]
        ok = not mismatched
        verdict("determinism", ok,
                "all artifacts byte-identical" if ok
                else f"mismatched: {mismatched}")

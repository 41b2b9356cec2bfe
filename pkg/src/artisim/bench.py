"""Benchmark harness: correction sessions across a cabinet suite.

A bench run executes every (seed, object, episode) session with the
configured policy, honoring the ablation toggles, and writes a
self-describing output directory: report tables, the cumulative
success-vs-corrections curve, every session log, and a quarantine list
for episodes that died in the policy or the wire rather than in the
simulator. Stateful policies (learnable, with adaptation on) are rebuilt
per seed and thread through that seed's episodes in a fixed order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import active_backend
from .bridge import BridgePolicy
from .correction import (
    SessionParams,
    run_session,
    session_from_dict,
    session_to_dict,
)
from .errors import ParseFailure, PolicyFailure, ProtocolViolation
from .interaction import Primitive
from .objects import front_camera, generate_suite, load_suite
from .policy import (
    Instruction,
    LearnablePolicy,
    OraclePolicy,
    PerturbedPolicy,
    tta_step,
)

POLICY_KINDS = ("oracle", "perturbed", "learnable", "bridge")

REPORT_FILES = ("report.json", "report.csv", "report.txt", "curve.csv",
                "sessions.jsonl", "quarantine.jsonl", "manifest.json")


@dataclass(frozen=True)
class BenchConfig:
    """Everything a run needs; serializes to JSON for the CLI and replay."""

    suite_dir: str | None = None
    suite_count: int = 20
    suite_seed: int = 0
    policy: dict = field(default_factory=lambda: {"kind": "oracle"})
    seeds: tuple = (0,)
    episodes_per_object: int = 10
    n_corrections: int = 4
    position_correction: bool = True
    rotation_correction: bool = True
    tta: bool = False
    camera: dict = field(default_factory=dict)
    instruction: str = "open the front of the cabinet"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.episodes_per_object < 1:
            raise ValueError("episodes_per_object must be at least 1")
        if self.n_corrections < 0:
            raise ValueError("n_corrections must be non-negative")
        kind = self.policy.get("kind")
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")

    def to_dict(self) -> dict:
        return {
            "suite_dir": self.suite_dir,
            "suite_count": self.suite_count,
            "suite_seed": self.suite_seed,
            "policy": self.policy,
            "seeds": list(self.seeds),
            "episodes_per_object": self.episodes_per_object,
            "n_corrections": self.n_corrections,
            "position_correction": self.position_correction,
            "rotation_correction": self.rotation_correction,
            "tta": self.tta,
            "camera": self.camera,
            "instruction": self.instruction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class EpisodeOutcome:
    seed: int
    object_name: str
    sample_id: str
    success: bool
    corrections_used: int
    attempts: int
    quarantined: str | None = None
    log: object = None


@dataclass
class BenchResult:
    config: BenchConfig
    episodes: list
    quarantine: list
    report: dict
    elapsed: float
    tta_steps: int


class _PolicyProvider:
    """Builds the per-episode policy; stateful kinds persist per seed."""

    def __init__(self, config: BenchConfig, out_dir: Path):
        self.config = config
        self.spec = config.policy
        self.kind = self.spec["kind"]
        self.out_dir = out_dir
        self.stateful = None
        self.schedule = None
        self.tta_counter = 0
        self._bridge = None

    def start_seed(self, seed: int):
        if self.kind == "learnable":
            mix = np.random.SeedSequence([int(self.spec.get("seed", 0)), seed])
            self.stateful = LearnablePolicy(
                seed=int(mix.generate_state(1)[0]),
                weight_decay=float(self.spec.get("weight_decay", 2e-3)))
            self.schedule = self.stateful.default_schedule()
            self.tta_counter = 0

    def for_episode(self, obj, rng, sample_id: str):
        if self.kind == "oracle":
            policy = OraclePolicy()
            policy.bind(obj)
            return policy
        if self.kind == "perturbed":
            oracle = OraclePolicy()
            oracle.bind(obj)
            return PerturbedPolicy(
                oracle,
                p_static=float(self.spec.get("p_static", 0.4)),
                sigma_dir=float(self.spec.get("sigma_dir", 0.6)),
                rng=rng)
        if self.kind == "learnable":
            return self.stateful
        if self._bridge is None:
            self._bridge = BridgePolicy(
                export_dir=self.out_dir / "bridge-exports",
                command=self.spec.get("command"),
                address=tuple(self.spec["address"]) if "address" in self.spec else None,
                timeout=float(self.spec.get("timeout", 30.0)),
                inline=bool(self.spec.get("inline", False)))
        self._bridge.session = sample_id
        return self._bridge

    def after_episode(self, policy, log):
        if self.config.tta and policy.supports_adaptation and log is not None:
            _, self.tta_counter = tta_step(
                policy, log, self.schedule, self.tta_counter)

    def discard_bridge(self):
        """After a transport failure the link is unusable; drop it so the
        next episode connects (or spawns) a fresh peer."""
        self.close()

    def close(self):
        if self._bridge is not None:
            self._bridge.close()
            self._bridge = None


def _resolve_suite(config: BenchConfig):
    if config.suite_dir is not None:
        return load_suite(config.suite_dir)
    return generate_suite(config.suite_count, config.suite_seed)


def _curve(outcomes, n_corrections: int):
    completed = [o for o in outcomes if o.quarantined is None]
    total = len(completed)
    points = []
    for k in range(n_corrections + 1):
        hits = sum(1 for o in completed
                   if o.success and o.corrections_used <= k)
        points.append({
            "corrections": k,
            "successes": hits,
            "episodes": total,
            "rate": hits / total if total else 0.0,
        })
    return points


def _success_stats(outcomes):
    completed = [o for o in outcomes if o.quarantined is None]
    hits = sum(1 for o in completed if o.success)
    return {
        "episodes": len(completed),
        "successes": hits,
        "success_rate": hits / len(completed) if completed else 0.0,
        "quarantined": sum(1 for o in outcomes if o.quarantined is not None),
    }


def build_report(config: BenchConfig, outcomes, tta_steps: int) -> dict:
    per_seed = []
    for seed in config.seeds:
        mine = [o for o in outcomes if o.seed == seed]
        entry = {"seed": seed}
        entry.update(_success_stats(mine))
        entry["curve"] = _curve(mine, config.n_corrections)
        per_seed.append(entry)
    names = []
    for o in outcomes:
        if o.object_name not in names:
            names.append(o.object_name)
    per_object = []
    for name in names:
        mine = [o for o in outcomes if o.object_name == name]
        entry = {"object": name}
        entry.update(_success_stats(mine))
        completed = [o for o in mine if o.quarantined is None]
        entry["mean_corrections"] = (
            sum(o.corrections_used for o in completed) / len(completed)
            if completed else 0.0)
        per_object.append(entry)
    overall = _success_stats(outcomes)
    overall["curve"] = _curve(outcomes, config.n_corrections)
    return {
        "config": config.to_dict(),
        "overall": overall,
        "per_seed": per_seed,
        "per_object": per_object,
        "tta_steps": tta_steps,
    }


def emit_tables(report: dict):
    """Return (csv_text, aligned_text) for the per-object table."""

    header = ("object", "episodes", "successes", "success_rate",
              "mean_corrections", "quarantined")
    rows = []
    for entry in report.get("per_object", ()):
        rows.append((entry["object"], str(entry["episodes"]),
                     str(entry["successes"]),
                     f"{entry['success_rate']:.4f}",
                     f"{entry['mean_corrections']:.4f}",
                     str(entry["quarantined"])))
    overall = report.get("overall")
    if overall is not None and rows:
        rows.append(("TOTAL", str(overall["episodes"]),
                     str(overall["successes"]),
                     f"{overall['success_rate']:.4f}", "-",
                     str(overall["quarantined"])))
    csv_text = ",".join(header) + "\n" + "".join(
        ",".join(row) + "\n" for row in rows)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows))
              if rows else len(header[i]) for i in range(len(header))]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    txt = line(header) + "\n"
    if rows:
        txt += line("-" * w for w in widths) + "\n"
        txt += "".join(line(r) + "\n" for r in rows)
    return csv_text, txt


def _curve_csv(report: dict) -> str:
    out = "corrections,successes,episodes,rate\n"
    for point in report["overall"]["curve"]:
        out += (f"{point['corrections']},{point['successes']},"
                f"{point['episodes']},{point['rate']:.6f}\n")
    return out


def _dump(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def run_bench(config: BenchConfig, out_dir) -> BenchResult:
    """Execute the configured bench and write its artifact directory."""

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suite = _resolve_suite(config)
    camera = front_camera(**config.camera)
    params = SessionParams(
        n_corrections=config.n_corrections,
        position_correction=config.position_correction,
        rotation_correction=config.rotation_correction)
    instruction = Instruction(Primitive.PULL, config.instruction)
    provider = _PolicyProvider(config, out)

    outcomes = []
    quarantine = []
    session_lines = []
    started = time.perf_counter()
    try:
        for seed in config.seeds:
            provider.start_seed(seed)
            for obj_idx, obj in enumerate(suite):
                for ep in range(config.episodes_per_object):
                    rng = np.random.default_rng(
                        np.random.SeedSequence([seed, obj_idx, ep]))
                    sample_id = f"s{seed}-{obj.name}-ep{ep:02d}"
                    policy = provider.for_episode(obj, rng, sample_id)
                    log = None
                    reason = None
                    try:
                        log = run_session(obj, camera, policy, instruction,
                                          params, sample_id=sample_id)
                    except PolicyFailure as exc:
                        log = exc.session_log
                        reason = f"policy failure: {exc}"
                    except (ProtocolViolation, ParseFailure) as exc:
                        reason = f"transport failure: {exc}"
                        provider.discard_bridge()
                    if reason is not None:
                        quarantine.append({
                            "seed": seed,
                            "sample_id": sample_id,
                            "reason": reason,
                        })
                    outcomes.append(EpisodeOutcome(
                        seed=seed,
                        object_name=obj.name,
                        sample_id=sample_id,
                        success=bool(log.final_success) if log else False,
                        corrections_used=log.corrections_used if log else 0,
                        attempts=len(log.attempts) if log else 0,
                        quarantined=reason,
                        log=log))
                    if log is not None:
                        session_lines.append(_dump({
                            "seed": seed,
                            "quarantined": reason,
                            "session": session_to_dict(log),
                        }))
                        if reason is None:
                            provider.after_episode(policy, log)
    finally:
        provider.close()
    elapsed = time.perf_counter() - started

    report = build_report(config, outcomes, provider.tta_counter)
    csv_text, txt_text = emit_tables(report)
    (out / "report.json").write_text(_dump(report) + "\n")
    (out / "report.csv").write_text(csv_text)
    (out / "report.txt").write_text(txt_text)
    (out / "curve.csv").write_text(_curve_csv(report))
    (out / "sessions.jsonl").write_text(
        "".join(line + "\n" for line in session_lines))
    (out / "quarantine.jsonl").write_text(
        "".join(_dump(q) + "\n" for q in quarantine))
    (out / "manifest.json").write_text(_dump({
        "artifacts": sorted(REPORT_FILES),
        "config": config.to_dict(),
        "episodes_total": len(outcomes),
        "suite": [obj.name for obj in suite],
    }) + "\n")
    (out / "runtime.json").write_text(_dump({
        "backend": active_backend(),
        "elapsed_seconds": elapsed,
    }) + "\n")
    return BenchResult(config=config, episodes=outcomes, quarantine=quarantine,
                       report=report, elapsed=elapsed,
                       tta_steps=provider.tta_counter)


DETERMINISTIC_FILES = ("report.json", "report.csv", "report.txt",
                       "curve.csv", "sessions.jsonl", "quarantine.jsonl",
                       "manifest.json")


def replay(bench_dir, scratch_dir=None):
    """Re-run a bench from its manifest and byte-compare the artifacts.

    Returns (match, mismatched file names). runtime.json is excluded: it
    records wall-clock timing. Bridge-policy runs depend on an external
    peer and cannot be replayed for determinism.
    """

    root = Path(bench_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    config = BenchConfig.from_dict(manifest["config"])
    if config.policy.get("kind") == "bridge":
        raise ValueError("bridge-policy runs are exempt from replay determinism")
    scratch = Path(scratch_dir) if scratch_dir else root / "replay-check"
    run_bench(config, scratch)
    mismatched = [name for name in DETERMINISTIC_FILES
                  if (root / name).read_bytes() != (scratch / name).read_bytes()]
    return not mismatched, mismatched


def load_sessions(bench_dir):
    """Session logs from a bench output directory, in run order."""

    lines = (Path(bench_dir) / "sessions.jsonl").read_text().splitlines()
    out = []
    for line in lines:
        entry = json.loads(line)
        out.append((entry["seed"], session_from_dict(entry["session"])))
    return out

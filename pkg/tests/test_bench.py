"""Bench harness: config handling, artifacts, determinism, CLI plumbing."""

import json

import numpy as np
import pytest

from artisim.bench import (
    DETERMINISTIC_FILES,
    BenchConfig,
    build_report,
    emit_tables,
    load_sessions,
    replay,
    run_bench,
)
from artisim.cli import main
from artisim.objects import generate_suite, write_suite

PERTURBED = {"kind": "perturbed", "p_static": 0.4, "sigma_dir": 0.6}


def small_config(**overrides):
    base = dict(suite_count=4, suite_seed=5, episodes_per_object=3,
                seeds=(0, 1), policy=PERTURBED)
    base.update(overrides)
    return BenchConfig(**base)


@pytest.fixture(scope="module")
def perturbed_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    return out, run_bench(small_config(), out)


class TestConfig:
    def test_round_trip(self):
        config = small_config(tta=True)
        assert BenchConfig.from_dict(config.to_dict()) == config

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            BenchConfig(seeds=())
        with pytest.raises(ValueError):
            BenchConfig(policy={"kind": "psychic"})
        with pytest.raises(ValueError):
            BenchConfig(episodes_per_object=0)
        with pytest.raises(ValueError):
            BenchConfig.from_dict({"seeds": [1], "surprise": True})


class TestRunBench:
    def test_artifacts_written(self, perturbed_run):
        out, _ = perturbed_run
        for name in DETERMINISTIC_FILES + ("runtime.json",):
            assert (out / name).exists(), name

    def test_episode_accounting(self, perturbed_run):
        out, result = perturbed_run
        assert len(result.episodes) == 4 * 3 * 2
        assert not result.quarantine
        assert (out / "quarantine.jsonl").read_text() == ""
        lines = (out / "sessions.jsonl").read_text().splitlines()
        assert len(lines) == len(result.episodes)
        overall = result.report["overall"]
        assert overall["episodes"] == len(result.episodes)
        assert 0.0 <= overall["success_rate"] <= 1.0

    def test_curve_is_cumulative_and_monotone(self, perturbed_run):
        _, result = perturbed_run
        rates = [p["rate"] for p in result.report["overall"]["curve"]]
        assert len(rates) == result.config.n_corrections + 1
        assert all(b >= a for a, b in zip(rates, rates[1:]))
        assert all(0.0 <= r <= 1.0 for r in rates)

    def test_per_seed_and_per_object_breakdown(self, perturbed_run):
        _, result = perturbed_run
        assert [e["seed"] for e in result.report["per_seed"]] == [0, 1]
        assert len(result.report["per_object"]) == 4
        for entry in result.report["per_object"]:
            assert entry["episodes"] == 3 * 2

    def test_sessions_reload(self, perturbed_run):
        out, result = perturbed_run
        sessions = load_sessions(out)
        assert len(sessions) == len(result.episodes)
        for (seed, log), outcome in zip(sessions, result.episodes):
            assert seed == outcome.seed
            assert log.final_success == outcome.success
            assert log.corrections_used == outcome.corrections_used

    def test_oracle_is_perfect_at_zero_corrections(self, tmp_path):
        result = run_bench(small_config(policy={"kind": "oracle"}, seeds=(0,)),
                           tmp_path / "oracle")
        overall = result.report["overall"]
        assert overall["success_rate"] == 1.0
        assert overall["curve"][0]["rate"] == 1.0
        assert all(e.corrections_used == 0 for e in result.episodes)

    def test_toggles_off_freeze_the_curve(self, tmp_path):
        result = run_bench(
            small_config(position_correction=False, rotation_correction=False,
                         seeds=(0,)),
            tmp_path / "flat")
        rates = [p["rate"] for p in result.report["overall"]["curve"]]
        assert rates[0] == rates[-1]
        assert all(e.corrections_used == 0 for e in result.episodes)

    def test_ablation_arms_share_initial_attempts(self, tmp_path):
        # arms with different toggles must diverge only after the first
        # attempt; the seeded initial prediction is identical
        full = run_bench(small_config(seeds=(3,)), tmp_path / "full")
        norot = run_bench(small_config(seeds=(3,), rotation_correction=False),
                          tmp_path / "norot")
        for a, b in zip(full.episodes, norot.episodes):
            assert a.sample_id == b.sample_id
            first_a = a.log.attempts[0]
            first_b = b.log.attempts[0]
            assert first_a.action.contact_pixel == first_b.action.contact_pixel
            np.testing.assert_array_equal(first_a.action.gripper_direction,
                                          first_b.action.gripper_direction)
            kinds = {r.correction_kind for r in b.log.attempts}
            assert "Rotation" not in kinds

    def test_loads_suite_from_directory(self, tmp_path):
        write_suite(tmp_path / "suite", generate_suite(2, seed=9))
        result = run_bench(
            BenchConfig(suite_dir=str(tmp_path / "suite"), seeds=(0,),
                        episodes_per_object=1, policy={"kind": "oracle"}),
            tmp_path / "run")
        assert [e["object"] for e in result.report["per_object"]] == [
            "drawer-00", "door-01"]


class TestTta:
    def test_learnable_threads_adaptation(self, tmp_path):
        config = BenchConfig(suite_count=3, suite_seed=5, episodes_per_object=4,
                             seeds=(0,), policy={"kind": "learnable", "seed": 3},
                             tta=True)
        result = run_bench(config, tmp_path / "tta")
        assert result.tta_steps > 0
        assert result.report["tta_steps"] == result.tta_steps

    def test_tta_off_leaves_counter_alone(self, tmp_path):
        config = BenchConfig(suite_count=2, suite_seed=5, episodes_per_object=2,
                             seeds=(0,), policy={"kind": "learnable", "seed": 3},
                             tta=False)
        result = run_bench(config, tmp_path / "notta")
        assert result.tta_steps == 0

    def test_stateless_policy_ignores_tta_toggle(self, tmp_path):
        result = run_bench(small_config(seeds=(0,), tta=True), tmp_path / "pt")
        assert result.tta_steps == 0


class TestDeterminism:
    def test_identical_runs_are_byte_identical(self, tmp_path):
        config = small_config(seeds=(7,))
        run_bench(config, tmp_path / "a")
        run_bench(config, tmp_path / "b")
        for name in DETERMINISTIC_FILES:
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes()), name

    def test_replay_matches(self, tmp_path):
        run_bench(small_config(seeds=(2,)), tmp_path / "orig")
        match, mismatched = replay(tmp_path / "orig", tmp_path / "scratch")
        assert match and not mismatched

    def test_replay_refuses_bridge_runs(self, tmp_path):
        out = tmp_path / "fake"
        out.mkdir()
        config = small_config(seeds=(0,)).to_dict()
        config["policy"] = {"kind": "bridge", "command": ["true"]}
        (out / "manifest.json").write_text(json.dumps(
            {"config": config, "artifacts": [], "episodes_total": 0, "suite": []}))
        with pytest.raises(ValueError):
            replay(out)


class TestEmitTables:
    def test_empty_report_yields_header_only(self):
        report = build_report(small_config(), [], 0)
        csv_text, txt_text = emit_tables(report)
        assert csv_text.splitlines() == [
            "object,episodes,successes,success_rate,mean_corrections,quarantined"]
        assert len(txt_text.splitlines()) == 1

    def test_known_report_is_byte_stable(self, perturbed_run):
        _, result = perturbed_run
        first = emit_tables(result.report)
        second = emit_tables(result.report)
        assert first == second
        csv_text, txt_text = first
        assert csv_text.splitlines()[-1].startswith("TOTAL,")
        assert txt_text.splitlines()[0].startswith("object")


class TestCli:
    def test_bench_run_and_replay(self, tmp_path, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(small_config(seeds=(4,)).to_dict()))
        out = tmp_path / "out"
        code = main(["bench-run", "--config", str(config_path),
                     "--out", str(out)])
        assert code == 0
        assert (out / "report.json").exists()
        assert "success rate" in capsys.readouterr().out
        assert main(["replay", "--dir", str(out),
                     "--scratch", str(tmp_path / "scr")]) == 0

    def test_bench_run_seed_override(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(small_config().to_dict()))
        out = tmp_path / "out"
        assert main(["bench-run", "--config", str(config_path),
                     "--out", str(out), "--seed", "9"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["seeds"] == [9]

    def test_datagen_writes_corpus(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        code = main(["datagen", "--out", str(out), "--objects", "1",
                     "--episodes", "2", "--seed", "1"])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert "2 episodes" in capsys.readouterr().out

    def test_bridge_serve_rejects_malformed_listen(self):
        assert main(["bridge-serve", "--listen", "nope"]) == 2

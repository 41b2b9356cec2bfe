"""Command-line entry points: bench-run, datagen, replay, bridge-serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _add_bench_run(sub):
    p = sub.add_parser("bench-run", help="run a benchmark from a JSON config")
    p.add_argument("--config", required=True, help="path to a BenchConfig JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config with this single seed")


def _add_datagen(sub):
    p = sub.add_parser("datagen", help="write an episode + VQA record corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--objects", type=int, default=10,
                   help="generated suite size when no --suite is given")
    p.add_argument("--suite", default=None, help="existing suite directory")
    p.add_argument("--episodes", type=int, default=100,
                   help="successful episodes per object")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-trials", type=int, default=2000,
                   help="sampling budget per requested episode")


def _add_replay(sub):
    p = sub.add_parser("replay", help="re-run a bench directory and byte-compare")
    p.add_argument("--dir", required=True, help="bench output directory")
    p.add_argument("--scratch", default=None, help="where to write the re-run")


def _add_bridge_serve(sub):
    p = sub.add_parser("bridge-serve",
                       help="answer bridge requests with the scripted rulebook")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true",
                      help="serve a single peer over stdin/stdout")
    mode.add_argument("--listen", metavar="HOST:PORT",
                      help="serve TCP peers on this address")
    p.add_argument("--max-sessions", type=int, default=None,
                   help="TCP only: exit after this many connections")


def _cmd_bench_run(args) -> int:
    from .bench import BenchConfig, run_bench

    raw = json.loads(Path(args.config).read_text())
    config = BenchConfig.from_dict(raw)
    if args.seed is not None:
        config = BenchConfig.from_dict({**raw, "seeds": [args.seed]})
    result = run_bench(config, args.out)
    sys.stdout.write((Path(args.out) / "report.txt").read_text())
    overall = result.report["overall"]
    sys.stdout.write(
        f"success rate {overall['success_rate']:.4f} over "
        f"{overall['episodes']} episodes; "
        f"{overall['quarantined']} quarantined\n")
    return 0 if not result.quarantine else 1


def _cmd_datagen(args) -> int:
    from .datagen import DatagenParams, write_corpus
    from .objects import front_camera, generate_suite, load_suite

    objects = (load_suite(args.suite) if args.suite
               else generate_suite(args.objects, args.seed))
    manifest = write_corpus(
        args.out, objects, front_camera(), args.episodes, seed=args.seed,
        params=DatagenParams(max_trials_per_episode=args.max_trials))
    sys.stdout.write(
        f"wrote {manifest['total_episodes']} episodes and "
        f"{manifest['total_records']} records to {args.out}\n")
    return 0


def _cmd_replay(args) -> int:
    from .bench import replay

    try:
        match, mismatched = replay(args.dir, args.scratch)
    except ValueError as exc:
        sys.stdout.write(f"replay refused: {exc}\n")
        return 2
    if match:
        sys.stdout.write("replay matches: all artifacts byte-identical\n")
        return 0
    sys.stdout.write("replay mismatch: " + ", ".join(mismatched) + "\n")
    return 2


def _cmd_bridge_serve(args) -> int:
    from .bridge import ScriptedAnswerer, serve_stdio, serve_tcp

    answerer = ScriptedAnswerer()
    if args.stdio:
        serve_stdio(answerer)
        return 0
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        sys.stderr.write("--listen expects HOST:PORT\n")
        return 2
    serve_tcp(answerer, host, int(port), max_sessions=args.max_sessions,
              on_bound=lambda p: sys.stderr.write(f"listening on {host}:{p}\n"))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="artisim",
        description="articulated-object interaction simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_bench_run(sub)
    _add_datagen(sub)
    _add_replay(sub)
    _add_bridge_serve(sub)
    args = parser.parse_args(argv)
    handler = {
        "bench-run": _cmd_bench_run,
        "datagen": _cmd_datagen,
        "replay": _cmd_replay,
        "bridge-serve": _cmd_bridge_serve,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())

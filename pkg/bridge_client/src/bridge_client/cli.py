"""Command-line entry point: serve a rulebook over stdio or TCP."""

from __future__ import annotations

import argparse
import sys

from .client import serve_stdio, serve_tcp
from .protocol import FrameError
from .rulebook import ClientAbort, make_rulebook


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="artisim-bridge-client",
        description="answer bridge requests from exported observations")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true",
                      help="serve a single peer over stdin/stdout")
    mode.add_argument("--listen", metavar="HOST:PORT",
                      help="serve TCP peers on this address")
    p.add_argument("--rulebook", default="min-depth",
                   help="min-depth (default), echo:TEXT, or die-after:N")
    p.add_argument("--max-sessions", type=int, default=None,
                   help="TCP only: exit after this many connections")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rulebook = make_rulebook(args.rulebook)
    except ValueError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    if args.stdio:
        try:
            serve_stdio(rulebook)
        except ClientAbort as exc:
            sys.stderr.write(f"aborted: {exc}\n")
            return 1
        except (FrameError, OSError) as exc:
            sys.stderr.write(f"peer failed: {exc}\n")
            return 1
        return 0
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        sys.stderr.write("--listen expects HOST:PORT\n")
        return 2

    def announce(bound):
        sys.stderr.write(f"listening on {host}:{bound}\n")
        sys.stderr.flush()

    serve_tcp(rulebook, host, int(port), max_sessions=args.max_sessions,
              on_bound=announce)
    return 0


if __name__ == "__main__":
    sys.exit(main())

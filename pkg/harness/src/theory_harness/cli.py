"""Harness CLI: `harness run` replays refs, `harness recheck` re-tests constraints."""

from __future__ import annotations

import argparse
import json

from .checks import ChecksumMismatch, LoadError, ShapeMismatch, recheck_constraints, run_refs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harness", description="verify exported models against their artifacts"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replay reference vectors through the exported model")
    p.add_argument("--model", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("recheck", help="re-run constraint residuals on fresh inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--theory", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            report = run_refs(args.model, args.refs, args.tol)
        else:
            report = recheck_constraints(args.model, args.theory, args.n, args.tol, args.seed)
    except (LoadError, ChecksumMismatch, ShapeMismatch, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}, indent=1))
        return 1
    print(json.dumps(report, indent=1))
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())

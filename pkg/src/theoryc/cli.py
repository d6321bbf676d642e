"""Command line front end: check, compile, certify, export, explain.

stdout carries machine-readable JSON only; human-oriented summaries go to
stderr.  Exit codes are stable for scripting: 0 success/pass, 1 ill-formed
theory or fail verdict, 2 I/O or syntax error, 3 unsupported/unwitnessed
combination, 4 provenance mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .archir import from_json, sha256_of, to_json, validate_graph
from .certify import certificate_json, full_certificate
from .errors import (
    CheckError,
    CompileError,
    ProvenanceMismatchError,
    TheorycError,
    TheorySyntaxError,
)
from .export import generate_model_source, generate_refs
from .groups import DEFAULT_GROUP_CAP
from .interp import init_params
from .lang import parse_theory
from .synth import SynthConfig, compile_theory
from .typecheck import check_wellformed

EXIT_OK = 0
EXIT_ILLFORMED = 1
EXIT_IO = 2
EXIT_UNSUPPORTED = 3
EXIT_PROVENANCE = 4


def _color_enabled() -> bool:
    return sys.stderr.isatty() and not os.environ.get("THEORYC_NO_COLOR")


def _mark(ok: bool) -> str:
    word = "PASS" if ok else "FAIL"
    if _color_enabled():
        code = "32" if ok else "31"
        return f"\x1b[{code}m{word}\x1b[0m"
    return word


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=1))


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_theory(path: str, group_cap: int):
    spec = parse_theory(_read_text(path))
    return check_wellformed(spec, group_cap)


def _synth_config(args) -> SynthConfig:
    return SynthConfig(
        hidden_width=args.width, depth=args.depth, nonlinearity="tanh", seed=args.seed
    )


# --- subcommands -------------------------------------------------------------------


def cmd_check(args) -> int:
    try:
        spec = parse_theory(_read_text(args.theory))
    except TheorySyntaxError as exc:
        _emit({"errors": [{"code": exc.code, "primitive": None, "detail": exc.message,
                           "residual": None, "line": exc.line, "col": exc.col}]})
        _eprint(f"{_mark(False)} {args.theory}: syntax error at {exc.line}:{exc.col}")
        return EXIT_IO
    try:
        check_wellformed(spec, args.group_cap)
    except CheckError as exc:
        _emit({"errors": [d.to_json() for d in exc.diagnostics]})
        _eprint(f"{_mark(False)} {args.theory}: {len(exc.diagnostics)} diagnostic(s)")
        return EXIT_ILLFORMED
    _emit({"errors": []})
    _eprint(f"{_mark(True)} {args.theory}: well-formed ({len(spec.primitives)} primitives)")
    return EXIT_OK


def cmd_compile(args) -> int:
    typed = _load_theory(args.theory, args.group_cap)
    graph = compile_theory(typed, _synth_config(args))
    issues = validate_graph(graph)
    if issues:  # compiler bug guard; synthesized graphs must always validate
        raise TheorycError(f"internal: compiled graph failed validation: {issues}")
    text = to_json(graph)
    sha = sha256_of(text)
    out_path = args.output or "model.archir"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    _emit({"archir_sha256": sha, "path": out_path, "nodes": len(graph.nodes)})
    _eprint(f"{_mark(True)} compiled {args.theory} -> {out_path} (sha256 {sha[:12]}...)")
    return EXIT_OK


def cmd_certify(args) -> int:
    archir_text = _read_text(args.archir)
    graph = from_json(archir_text)
    typed = _load_theory(args.theory, args.group_cap)
    cert = full_certificate(
        graph,
        typed,
        n_params=args.samples,
        n_inputs=args.inputs,
        tol_exact=args.tol_exact,
        tol_fd=args.tol_fd,
        fd_step=args.fd_step,
        seed=args.seed,
        archir_sha=sha256_of(archir_text),
    )
    text = certificate_json(cert)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    for claim in cert.claims:
        _eprint(f"  {_mark(claim.passed)} {claim.primitive}: {claim.kind}")
    _eprint(f"{_mark(cert.passed)} verdict: {cert.verdict}")
    return EXIT_OK if cert.passed else EXIT_ILLFORMED


def cmd_export(args) -> int:
    archir_text = _read_text(args.archir)
    graph = from_json(archir_text)
    sha = sha256_of(archir_text)
    params = init_params(graph, args.seed)
    source = generate_model_source(graph, params, sha, target=args.target)
    refs = generate_refs(graph, params, args.seed, sha, count=args.count)
    model_path = args.output or "model.py"
    refs_path = args.refs or "refs.json"
    with open(model_path, "w", encoding="utf-8") as fh:
        fh.write(source)
    with open(refs_path, "w", encoding="utf-8") as fh:
        json.dump(refs, fh, indent=1)
        fh.write("\n")
    _emit({"model": model_path, "refs": refs_path, "archir_sha256": sha, "cases": args.count})
    _eprint(f"{_mark(True)} exported {model_path} + {refs_path}")
    return EXIT_OK


def cmd_explain(args) -> int:
    typed = _load_theory(args.theory, args.group_cap)
    graph = compile_theory(typed, _synth_config(args))
    rules = []
    for prim in typed.spec.primitives:
        nodes = [
            n
            for n in graph.nodes
            if any(name == prim.name for name, _ in graph.provenance.get(n.node_id, ()))
        ]
        rule = next(
            rule
            for n in nodes
            for name, rule in graph.provenance.get(n.node_id, ())
            if name == prim.name
        )
        modules = sorted({n.kind for n in nodes})
        slot_counts = [
            int(p.shape[0])
            for n in nodes
            for p in n.params
            if p.name == "orbit_weights"
        ]
        licensed = [
            f"({a},{b})" for (a, b) in typed.compat_witnesses if prim.name in (a, b)
        ]
        entry = {
            "primitive": prim.name,
            "kind": prim.kind,
            "rule": rule,
            "modules": modules,
            "constrained_nodes": [n.node_id for n in nodes],
            "shared_slot_counts": slot_counts,
            "licensed_by": licensed,
        }
        rules.append(entry)
        slots = f", orbit slots per layer {slot_counts}" if slot_counts else ""
        lic = f", licensed by {' '.join(licensed)}" if licensed else ""
        _eprint(f"  {prim.name}: {prim.kind} -> {rule} ({'+'.join(modules)}{slots}{lic})")
    note = None
    if not rules:
        note = "no constraints; free MLP"
        _eprint(f"  {note}")
    _emit({"theory": typed.spec.name, "rules": rules, "note": note})
    return EXIT_OK


# --- argument plumbing ----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    p.add_argument("--group-cap", type=int, default=DEFAULT_GROUP_CAP,
                   help=f"max enumerated group order (default {DEFAULT_GROUP_CAP})")


def _add_synth(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=32, help="hidden width per variable (default 32)")
    p.add_argument("--depth", type=int, default=2, help="linear layers in the core (default 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="theoryc",
        description="compile typed domain theories into certified architecture graphs",
    )
    parser.add_argument("--version", action="version", version=f"theoryc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="type-check a theory file")
    p.add_argument("theory")
    _add_common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compile", help="compile a theory to an .archir graph")
    p.add_argument("theory")
    p.add_argument("-o", "--output", help="output path (default model.archir)")
    _add_common(p)
    _add_synth(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("certify", help="certify an .archir graph against its theory")
    p.add_argument("archir")
    p.add_argument("theory")
    p.add_argument("-o", "--output", help="also write the certificate JSON here")
    p.add_argument("--samples", type=int, default=256, help="parameter draws (default 256)")
    p.add_argument("--inputs", type=int, default=64, help="inputs per draw (default 64)")
    p.add_argument("--tol-exact", type=float, default=1e-9)
    p.add_argument("--tol-fd", type=float, default=1e-5)
    p.add_argument("--fd-step", type=float, default=1e-4)
    _add_common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("export", help="emit standalone model source + reference vectors")
    p.add_argument("archir")
    p.add_argument("-o", "--output", help="model source path (default model.py)")
    p.add_argument("--refs", help="reference vector path (default refs.json)")
    p.add_argument("--target", default="python", help="export target (default python)")
    p.add_argument("--count", type=int, default=32, help="reference cases (default 32)")
    _add_common(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("explain", help="print the compilation rule trace for a theory")
    p.add_argument("theory")
    _add_common(p)
    _add_synth(p)
    p.set_defaults(func=cmd_explain)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TheorySyntaxError as exc:
        _emit({"errors": [{"code": exc.code, "primitive": None, "detail": exc.message,
                           "residual": None, "line": exc.line, "col": exc.col}]})
        _eprint(f"{_mark(False)} syntax error at {exc.line}:{exc.col}: {exc.message}")
        return EXIT_IO
    except CheckError as exc:
        _emit({"errors": [d.to_json() for d in exc.diagnostics]})
        _eprint(f"{_mark(False)} ill-formed theory: {len(exc.diagnostics)} diagnostic(s)")
        return EXIT_ILLFORMED
    except ProvenanceMismatchError as exc:
        _emit({"errors": [{"code": exc.code, "primitive": None, "detail": str(exc), "residual": None}]})
        _eprint(f"{_mark(False)} provenance mismatch: {exc}")
        return EXIT_PROVENANCE
    except CompileError as exc:
        _emit({"errors": [{"code": exc.code, "primitive": None, "detail": str(exc), "residual": None}]})
        _eprint(f"{_mark(False)} {exc.code}: {exc}")
        return EXIT_UNSUPPORTED
    except OSError as exc:
        _emit({"errors": [{"code": "IOError", "primitive": None, "detail": str(exc), "residual": None}]})
        _eprint(f"{_mark(False)} {exc}")
        return EXIT_IO
    except (TheorycError, ValueError) as exc:
        _emit({"errors": [{"code": getattr(exc, 'code', 'Error'), "primitive": None,
                           "detail": str(exc), "residual": None}]})
        _eprint(f"{_mark(False)} {exc}")
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())

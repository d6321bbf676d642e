"""Certificates: soundness replay, linear completeness, composition checks.

A certificate pairs, per primitive, a symbolic-rule claim (the compiled
graph's constrained structure is re-derived from the theory and compared
exactly, including a bitwise commutation replay for tied layers) with a
numeric-residual claim (the constraint identity evaluated on sampled
parameters and inputs).  The numeric side is corroboration only — "sampled"
is recorded on every such claim — while the universal guarantee is carried by
the symbolic claim.  Completeness is certified only for the equivariant
linear family, where orbit counting must match an independent commutant
rank computation; everything else gets an explicit unverified note.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import rng
from .archir import ArchGraph, sha256_of, to_json
from .errors import (
    CheckError,
    GroupOrderCapExceededError,
    MissingWitnessError,
    ProvenanceMismatchError,
)
from .groups import DEFAULT_GROUP_CAP, inverse, pair_orbit_ids, perm_matrix
from .interp import apply_perm, bind, init_params, materialize_weight, run
from .lang import SymmetryGroup, conjoin
from .synth import SynthConfig, _actions_for_width, _trivial_actions, compile_theory, compose
from .typecheck import (
    TypedTheory,
    check_wellformed,
    conservation_sides,
    reflexive_transitive_closure,
)

TOL_EXACT = 1e-9
TOL_FD = 1e-5
FD_STEP = 1e-4
FUNCTORIALITY_TOL = 1e-12

SAMPLED_NOTE = "sampled corroboration; the universal guarantee is the symbolic rule claim"


@dataclass(frozen=True)
class Claim:
    primitive: str
    kind: str  # symbolic_rule | numeric_residual | completeness_dim | functoriality
    identity: str
    passed: bool
    samples: int | None = None
    max_residual: float | None = None
    tolerance: float | None = None
    orbit_count: int | None = None
    commutant_dim: int | None = None
    pair: tuple[str, str] | None = None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "primitive": self.primitive,
            "kind": self.kind,
            "identity": self.identity,
            "samples": self.samples,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "orbit_count": self.orbit_count,
            "commutant_dim": self.commutant_dim,
            "pair": list(self.pair) if self.pair else None,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass(frozen=True)
class Certificate:
    theory: str
    archir_sha256: str
    claims: tuple[Claim, ...]
    verdict: str  # "pass" | "fail"
    seed: int
    tool_version: str
    sample_counts: dict
    tolerances: dict
    completeness_notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def certificate_json(cert: Certificate) -> str:
    doc = {
        "certificate_version": 1,
        "theory": cert.theory,
        "archir_sha256": cert.archir_sha256,
        "claims": [c.to_json() for c in cert.claims],
        "verdict": cert.verdict,
        "seed": cert.seed,
        "tool_version": cert.tool_version,
        "sample_counts": cert.sample_counts,
        "tolerances": cert.tolerances,
        "completeness_notes": list(cert.completeness_notes),
    }
    return json.dumps(doc, indent=1) + "\n"


def _verdict(claims) -> str:
    return "pass" if all(c.passed for c in claims) else "fail"


# --- symbolic replay ---------------------------------------------------------------


def _structure_mismatches(got: ArchGraph, expected: ArchGraph) -> dict[int, list[str]] | None:
    """Per-node payload differences, or None when topology itself differs."""
    if len(got.nodes) != len(expected.nodes):
        return None
    if got.edges != expected.edges:
        return None
    diffs: dict[int, list[str]] = {}
    for a, b in zip(got.nodes, expected.nodes):
        local: list[str] = []
        if (a.kind, a.width_in, a.width_out) != (b.kind, b.width_in, b.width_out):
            diffs[b.node_id] = [f"node is {a.kind} {a.width_in}->{a.width_out}, "
                               f"rule expects {b.kind} {b.width_in}->{b.width_out}"]
            continue
        if [(p.slot_id, p.shape, p.name) for p in a.params] != [
            (p.slot_id, p.shape, p.name) for p in b.params
        ]:
            local.append("parameter slots differ from the re-derived compilation")
        for field in ("slot_ids", "mask", "matrix", "input_matrix", "offset", "correction"):
            va, vb = getattr(a, field), getattr(b, field)
            if (va is None) != (vb is None) or (va is not None and not np.array_equal(va, vb)):
                local.append(f"{field} differs from the re-derived compilation")
        if (a.fn, a.features) != (b.fn, b.features):
            local.append("nonlinearity/feature payload differs")
        if local:
            diffs[b.node_id] = local
    return diffs


def _sym_actions_per_node(
    typed: TypedTheory, expected: ArchGraph
) -> dict[int, tuple[list, list]]:
    """(row_perms, col_perms) per tied core node, from the merged generators."""
    syms = [p for p in typed.spec.primitives if p.kind == "Sym"]
    if not syms:
        return {}
    gens = tuple(g for p in syms for g in p.payload.generators)
    if not gens:
        gens = (tuple(range(typed.spec.signature.input_dim)),)
    action = syms[0].payload.output_action
    degree = typed.spec.signature.input_dim
    shared = [n for n in expected.nodes if n.kind == "shared_linear"]
    out: dict[int, tuple[list, list]] = {}
    for i, node in enumerate(shared):
        cols = _actions_for_width(gens, degree, node.width_in)
        if action == "same" or i < len(shared) - 1:
            rows = _actions_for_width(gens, degree, node.width_out)
        else:
            rows = _trivial_actions(len(gens), node.width_out)
        out[node.node_id] = (rows, cols)
    return out


def _bitwise_commutation_ok(
    g: ArchGraph, actions: dict[int, tuple[list, list]], seed: int
) -> tuple[bool, str]:
    """Replay P_g W == W P_g exactly on one materialized parameter draw."""
    params = init_params(g, rng.mix(seed, 0xB17))
    for node in g.nodes:
        if node.node_id not in actions or node.kind != "shared_linear":
            continue
        w = materialize_weight(node, params)
        rows, cols = actions[node.node_id]
        for rp, cp in zip(rows, cols):
            rinv = list(inverse(tuple(rp)))
            if not np.array_equal(w[rinv, :], w[:, list(cp)]):
                return False, f"commutation fails bitwise at node {node.node_id}"
    return True, ""


_SYMBOLIC_IDENTITY = {
    "Sym": "weight tying equals the joint pair-orbit partition; P_g W == W P_g "
    "holds bitwise per generator on tied layers",
    "Cons": "terminal projection constants (A, input side, target, correction) "
    "match the theory-derived projection exactly",
    "Caus": "structural zeros equal the blocked reflexive-transitive closure exactly",
    "Diff": "output is the rotated gradient of a scalar stream function "
    "(closed-form tanh derivatives), divergence-free by construction",
}


def _symbolic_claims(
    g: ArchGraph, typed: TypedTheory, expected: ArchGraph, seed: int
) -> list[Claim]:
    diffs = _structure_mismatches(g, expected)
    claims: list[Claim] = []
    actions = _sym_actions_per_node(typed, expected)
    bitwise_ok, bitwise_detail = (True, "")
    if diffs is not None and actions:
        bitwise_ok, bitwise_detail = _bitwise_commutation_ok(g, actions, seed)

    for prim in typed.spec.primitives:
        identity = _SYMBOLIC_IDENTITY[prim.kind]
        if diffs is None:
            claims.append(
                Claim(
                    prim.name,
                    "symbolic_rule",
                    identity,
                    passed=False,
                    note="graph topology differs from the re-derived compilation",
                )
            )
            continue
        notes: list[str] = []
        for node_id, problems in diffs.items():
            owners = {name for name, _ in expected.provenance.get(node_id, ())}
            if prim.name in owners or not owners:
                notes.extend(f"node {node_id}: {p}" for p in problems)
        if prim.kind == "Sym" and not bitwise_ok:
            notes.append(bitwise_detail)
        claims.append(
            Claim(
                prim.name,
                "symbolic_rule",
                identity,
                passed=not notes,
                note="; ".join(notes),
            )
        )
    return claims


# --- numeric sampling ----------------------------------------------------------------


def _fd_jacobians(bound, x_batch: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobians for a whole batch: shape (B, out, in)."""
    b, n = x_batch.shape
    steps = np.eye(n) * h
    plus = (x_batch[:, None, :] + steps[None, :, :]).reshape(b * n, n)
    minus = (x_batch[:, None, :] - steps[None, :, :]).reshape(b * n, n)
    ys = run(bound, np.concatenate([plus, minus], axis=0))
    out_dim = ys.shape[1]
    yp = ys[: b * n].reshape(b, n, out_dim)
    ym = ys[b * n :].reshape(b, n, out_dim)
    return (yp - ym).transpose(0, 2, 1) / (2.0 * h)


_NUMERIC_IDENTITY = {
    "Sym": "max ||f(g x) - rho(g) f(x)||_inf over sampled (params, x, g)",
    "Cons": "max ||A f(x) - t(x)||_inf over sampled (params, x)",
    "Caus": "max |J_fd[j][i]| over mask-forbidden (j, i) and sampled (params, x)",
    "Diff": "max |d u/d x + d v/d y| by central differences over sampled (params, x)",
}


def certify_soundness(
    g: ArchGraph,
    typed: TypedTheory,
    n_params: int = 256,
    n_inputs: int = 64,
    tol_exact: float = TOL_EXACT,
    tol_fd: float = TOL_FD,
    fd_step: float = FD_STEP,
    seed: int = 0,
    archir_sha: str | None = None,
) -> Certificate:
    """Per-primitive symbolic and sampled-residual claims for one compiled graph."""
    from . import __version__

    spec = typed.spec
    sig = spec.signature
    if g.theory != spec.name:
        raise ProvenanceMismatchError(
            f"graph was compiled from theory {g.theory!r}, not {spec.name!r}"
        )
    if (g.input_dim, g.output_dim) != (sig.input_dim, sig.output_dim):
        raise ProvenanceMismatchError("graph dimensions do not match the theory signature")
    prov_names = {name for entries in g.provenance.values() for name, _ in entries}
    theory_names = {p.name for p in spec.primitives}
    if prov_names != theory_names:
        raise ProvenanceMismatchError(
            f"provenance names {sorted(prov_names)} != theory primitives {sorted(theory_names)}"
        )

    cfg = SynthConfig.from_dict(g.config)
    expected = compile_theory(typed, cfg)
    claims = _symbolic_claims(g, typed, expected, seed)

    # numeric residual accumulators, keyed by primitive name
    numeric_max = {p.name: 0.0 for p in spec.primitives}
    needs_fd = any(p.kind in ("Caus", "Diff") for p in spec.primitives)
    n = sig.input_dim

    for draw in range(n_params):
        params = init_params(g, rng.mix(seed, 0x5EED, draw))
        bound = bind(g, params)
        x = rng.normal(rng.mix(seed, 0x1D, draw), n_inputs * n).reshape(n_inputs, n)
        y = run(bound, x)
        jac = _fd_jacobians(bound, x, fd_step) if needs_fd else None

        for pi, prim in enumerate(spec.primitives):
            if prim.kind == "Sym":
                table = typed.group_tables[prim.name]
                pick = int(rng.integers(rng.mix(seed, 0xE1, draw, pi), 1, len(table))[0])
                elements = list(prim.payload.generators) + [table[pick]]
                worst = numeric_max[prim.name]
                for el in elements:
                    yg = run(bound, apply_perm(el, x))
                    want = apply_perm(el, y) if prim.payload.output_action == "same" else y
                    worst = max(worst, float(np.max(np.abs(yg - want))))
                numeric_max[prim.name] = worst
            elif prim.kind == "Cons":
                a, t, c = conservation_sides(prim.payload, n)
                target = x @ t.T + c
                res = float(np.max(np.abs(y @ a.T - target)))
                numeric_max[prim.name] = max(numeric_max[prim.name], res)
            elif prim.kind == "Caus":
                forbidden = reflexive_transitive_closure(prim.payload) == 0
                if forbidden.any():
                    res = float(np.max(np.abs(jac[:, forbidden])))
                    numeric_max[prim.name] = max(numeric_max[prim.name], res)
            elif prim.kind == "Diff":
                div = jac[:, 0, 0] + jac[:, 1, 1]
                numeric_max[prim.name] = max(numeric_max[prim.name], float(np.max(np.abs(div))))

    numeric_claims = []
    for prim in spec.primitives:
        tol = tol_fd if prim.kind in ("Caus", "Diff") else tol_exact
        res = numeric_max[prim.name]
        numeric_claims.append(
            Claim(
                prim.name,
                "numeric_residual",
                _NUMERIC_IDENTITY[prim.kind],
                passed=res <= tol,
                samples=n_params * n_inputs,
                max_residual=res,
                tolerance=tol,
                note=SAMPLED_NOTE,
            )
        )

    ordered: list[Claim] = []
    for prim in spec.primitives:
        ordered.append(next(c for c in claims if c.primitive == prim.name))
        ordered.append(next(c for c in numeric_claims if c.primitive == prim.name))

    return Certificate(
        theory=spec.name,
        archir_sha256=archir_sha or sha256_of(to_json(g)),
        claims=tuple(ordered),
        verdict=_verdict(ordered),
        seed=seed,
        tool_version=__version__,
        sample_counts={"param_draws": n_params, "inputs_per_draw": n_inputs},
        tolerances={"exact": tol_exact, "fd": tol_fd, "fd_step": fd_step},
    )


# --- completeness (linear equivariant case) ---------------------------------------------


def certify_completeness_linear(
    group: SymmetryGroup, cap: int = DEFAULT_GROUP_CAP, primitive: str = "sym"
) -> Claim:
    """Orbit count of the pair action vs. commutant dimension by rank.

    The tied layer family is complete iff the number of free parameters
    (pair orbits) equals the dimension of {W : P_g W = W P_g for all g},
    computed independently as n^2 minus the rank of the stacked commutation
    system over the generators.
    """
    n = group.degree
    if n > 12:
        raise GroupOrderCapExceededError(f"completeness certification limited to degree <= 12, got {n}")
    from . import groups as _g

    table = _g.enumerate_group(group.generators, n, cap)
    gens = group.generators if group.generators else (tuple(range(n)),)
    ids = pair_orbit_ids([tuple(p) for p in gens], [tuple(p) for p in gens])
    orbit_count = int(ids.max()) + 1

    eye = np.eye(n)
    blocks = []
    for gen in gens:
        p = perm_matrix(tuple(gen))
        blocks.append(np.kron(p, eye) - np.kron(eye, p.T))
    stacked = np.concatenate(blocks, axis=0)
    s = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
    commutant_dim = n * n - rank

    return Claim(
        primitive,
        "completeness_dim",
        "pair-orbit count == dim {W : P_g W = W P_g for all g} (rank oracle)",
        passed=orbit_count == commutant_dim,
        orbit_count=orbit_count,
        commutant_dim=commutant_dim,
        note=f"group order {len(table)}",
    )


UNVERIFIED_NOTE = (
    "completeness unverified for {name} ({kind}): no general completeness "
    "certificate exists for this constraint class"
)


def full_certificate(
    g: ArchGraph,
    typed: TypedTheory,
    n_params: int = 256,
    n_inputs: int = 64,
    tol_exact: float = TOL_EXACT,
    tol_fd: float = TOL_FD,
    fd_step: float = FD_STEP,
    seed: int = 0,
    archir_sha: str | None = None,
) -> Certificate:
    """Soundness claims plus completeness claims/notes, one document."""
    cert = certify_soundness(
        g, typed, n_params, n_inputs, tol_exact, tol_fd, fd_step, seed, archir_sha
    )
    extra: list[Claim] = []
    notes: list[str] = []
    for prim in typed.spec.primitives:
        if prim.kind == "Sym" and prim.payload.degree <= 12:
            extra.append(
                certify_completeness_linear(prim.payload, typed.group_cap, prim.name)
            )
        else:
            notes.append(UNVERIFIED_NOTE.format(name=prim.name, kind=prim.kind))
    claims = cert.claims + tuple(extra)
    return dc_replace(
        cert,
        claims=claims,
        verdict=_verdict(claims),
        completeness_notes=tuple(notes),
    )


# --- functoriality -----------------------------------------------------------------------


def check_functoriality(
    t1: TypedTheory,
    t2: TypedTheory,
    cfg: SynthConfig = SynthConfig(),
    n_samples: int = 100,
    seed: int = 0,
) -> Claim:
    """Compare compiling the conjunction against composing the compilations.

    Parameters transport across the two graphs by identical slot layout
    (verified before evaluation); the claim passes when the max forward
    discrepancy over sampled (params, input) pairs is at most 1e-12.
    """
    conj = conjoin(t1.spec, t2.spec)
    try:
        typed_conj = check_wellformed(conj, t1.group_cap)
    except CheckError as exc:
        pair_codes = {"IncompatiblePrimitives", "UnsupportedPair"}
        if all(d.code in pair_codes for d in exc.diagnostics):
            raise MissingWitnessError(
                "no compatibility witness exists for the pair: "
                + "; ".join(d.detail for d in exc.diagnostics)
            ) from exc
        raise

    g_conj = compile_theory(typed_conj, cfg)
    g1 = compile_theory(t1, cfg)
    g2 = compile_theory(t2, cfg)
    witnesses = [typed_conj.compat_witnesses[k] for k in sorted(typed_conj.compat_witnesses)]
    g_comp = compose(g1, g2, witnesses)

    slots_a = [(p.slot_id, p.shape) for node in g_conj.nodes for p in node.params]
    slots_b = [(p.slot_id, p.shape) for node in g_comp.nodes for p in node.params]
    if slots_a != slots_b:
        raise ProvenanceMismatchError(
            "parameter transport failed: conjunction and composition graphs "
            "declare different slot layouts"
        )

    draws = max(1, min(10, n_samples))
    per_draw = max(1, -(-n_samples // draws))
    n = g_conj.input_dim
    worst = 0.0
    for draw in range(draws):
        params = init_params(g_conj, rng.mix(seed, 0xF0, draw))
        x = rng.normal(rng.mix(seed, 0xF1, draw), per_draw * n).reshape(per_draw, n)
        ya = run(bind(g_conj, params), x)
        yb = run(bind(g_comp, params), x)
        worst = max(worst, float(np.max(np.abs(ya - yb))))

    return Claim(
        primitive=f"{t1.spec.name}&{t2.spec.name}",
        kind="functoriality",
        identity="compile(T1 and T2) == compose(compile(T1), compile(T2)) on sampled evaluations",
        passed=worst <= FUNCTORIALITY_TOL,
        samples=draws * per_draw,
        max_residual=worst,
        tolerance=FUNCTORIALITY_TOL,
        pair=(t1.spec.name, t2.spec.name),
    )

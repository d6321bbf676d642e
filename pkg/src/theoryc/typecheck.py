"""Well-formedness checking: the decidable core in front of synthesis.

check_wellformed validates every primitive, enumerates symmetry groups,
topologically sorts causal graphs, and verifies every declared compatibility
relation constructively, producing a TypedTheory.  All violations are
collected into one diagnostic list; nothing stops at the first error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import groups
from .errors import (
    CheckError,
    GroupOrderCapExceededError,
    NonBijectiveGeneratorError,
    UnsupportedPairError,
)
from .groups import DEFAULT_GROUP_CAP, Perm
from .lang import CausalGraph, ConservationLaw, Primitive, SymmetryGroup, TheorySpec

RANK_TOL = 1e-10
WITNESS_TOL = 1e-10


@dataclass(frozen=True)
class Diagnostic:
    code: str
    primitive: str | None
    detail: str
    residual: float | None = None

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "primitive": self.primitive,
            "detail": self.detail,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class CompatibilityWitness:
    """Constructive evidence that a primitive pair composes soundly.

    data holds kind-pair-specific evidence:
      (Sym, Cons):  "lambdas" — per-group-element row-mixing matrices L_g
                    with A @ P_g == L_g @ A (plus the input-side /
                    fixed-target conditions for the declared mode).
      (Sym, Caus):  "checked_elements" — every group element conjugates the
                    reflexive-transitive closure onto itself.
      (Cons, Caus): "sinks" — per conservation row, the designated variable
                    that absorbs the correction; its ancestor closure covers
                    the row's support, so the correction respects the mask.
    """

    pair: tuple[str, str]
    kinds: tuple[str, str]
    data: dict = field(compare=False)
    max_residual: float = 0.0


@dataclass(frozen=True)
class TypedTheory:
    spec: TheorySpec
    group_tables: dict[str, tuple[Perm, ...]] = field(compare=False)
    topo_orders: dict[str, tuple[int, ...]] = field(compare=False)
    closures: dict[str, np.ndarray] = field(compare=False)
    compat_witnesses: dict[tuple[str, str], CompatibilityWitness] = field(compare=False)
    group_cap: int = DEFAULT_GROUP_CAP


def enumerate_group(generators, degree: int, cap: int = DEFAULT_GROUP_CAP) -> list[Perm]:
    """Full generated group in canonical (lexicographic) order."""
    return groups.enumerate_group(generators, degree, cap)


def reflexive_transitive_closure(dag: CausalGraph) -> np.ndarray:
    """M[j, i] = 1 iff i is j or an ancestor of j.  Requires acyclicity."""
    n = dag.num_vars
    reach = np.eye(n, dtype=bool)
    adj = np.zeros((n, n), dtype=bool)
    for parent, child in dag.edges:
        adj[child, parent] = True
    changed = True
    while changed:
        new = reach | (reach @ adj) | adj
        changed = not np.array_equal(new, reach)
        reach = new
    return reach.astype(np.int64)


def topological_order(dag: CausalGraph) -> tuple[int, ...] | None:
    """Kahn's algorithm with smallest-vertex tie-breaking; None on a cycle."""
    n = dag.num_vars
    indeg = [0] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for parent, child in dag.edges:
        indeg[child] += 1
        children[parent].append(child)
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order: list[int] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        changed = False
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    return tuple(order) if len(order) == n else None


def conservation_sides(
    law: ConservationLaw, input_dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (A, T, c) with the constraint reading A @ f(x) = T @ x + c."""
    a = np.asarray(law.matrix, dtype=np.float64)
    k = a.shape[0]
    if law.mode == "preserve":
        if law.input_matrix is not None:
            t = np.asarray(law.input_matrix, dtype=np.float64)
        else:
            t = a.copy()
        c = np.zeros(k)
    else:
        t = np.zeros((k, input_dim))
        c = np.asarray(law.target, dtype=np.float64)
    return a, t, c


def _row_rank_ok(a: np.ndarray) -> bool:
    if not np.all(np.isfinite(a)):
        return False
    s = np.linalg.svd(a, compute_uv=False)
    return s.size > 0 and s[-1] > RANK_TOL * s[0]


# --- per-primitive checks -------------------------------------------------------


def _check_sym(prim: Primitive, spec: TheorySpec, cap: int, out: list[Diagnostic]):
    g: SymmetryGroup = prim.payload
    if g.degree != spec.signature.input_dim:
        out.append(
            Diagnostic(
                "DimensionMismatch",
                prim.name,
                f"group degree {g.degree} != input dimension {spec.signature.input_dim}",
            )
        )
        return None
    if g.output_action == "same" and spec.signature.output_dim != g.degree:
        out.append(
            Diagnostic(
                "DimensionMismatch",
                prim.name,
                f"output_action same needs output dimension {g.degree}, "
                f"found {spec.signature.output_dim}",
            )
        )
        return None
    for gen in g.generators:
        if not groups.is_bijection(gen, g.degree):
            out.append(
                Diagnostic(
                    "GroupAxiomViolation",
                    prim.name,
                    f"generator perm{gen} is not a bijection on 0..{g.degree - 1}",
                )
            )
            return None
    try:
        return tuple(groups.enumerate_group(g.generators, g.degree, cap))
    except GroupOrderCapExceededError as exc:
        out.append(Diagnostic("GroupOrderCapExceeded", prim.name, str(exc)))
    except NonBijectiveGeneratorError as exc:
        out.append(Diagnostic("GroupAxiomViolation", prim.name, str(exc)))
    return None


def _check_cons(prim: Primitive, spec: TheorySpec, out: list[Diagnostic]) -> bool:
    law: ConservationLaw = prim.payload
    a = np.asarray(law.matrix, dtype=np.float64)
    in_dim, out_dim = spec.signature.input_dim, spec.signature.output_dim
    ok = True
    if a.ndim != 2 or a.shape[1] != out_dim:
        out.append(
            Diagnostic(
                "DimensionMismatch",
                prim.name,
                f"matrix shape {a.shape} does not match output dimension {out_dim}",
            )
        )
        return False
    if not np.all(np.isfinite(a)):
        out.append(Diagnostic("NonFiniteValue", prim.name, "matrix has non-finite entries"))
        return False
    if not _row_rank_ok(a):
        out.append(
            Diagnostic(
                "RankDeficientConservation",
                prim.name,
                f"matrix rows are linearly dependent at tolerance {RANK_TOL}",
            )
        )
        ok = False
    if law.mode == "preserve":
        if law.input_matrix is None:
            if in_dim != out_dim:
                out.append(
                    Diagnostic(
                        "DimensionMismatch",
                        prim.name,
                        "preserve mode with input dimension != output dimension "
                        "requires an explicit input_matrix",
                    )
                )
                ok = False
        else:
            t = np.asarray(law.input_matrix, dtype=np.float64)
            if t.shape != (a.shape[0], in_dim):
                out.append(
                    Diagnostic(
                        "DimensionMismatch",
                        prim.name,
                        f"input_matrix shape {t.shape} != ({a.shape[0]}, {in_dim})",
                    )
                )
                ok = False
            elif not np.all(np.isfinite(t)):
                out.append(Diagnostic("NonFiniteValue", prim.name, "input_matrix has non-finite entries"))
                ok = False
    else:
        b = law.target or ()
        if len(b) != a.shape[0]:
            out.append(
                Diagnostic(
                    "DimensionMismatch",
                    prim.name,
                    f"fix target length {len(b)} != row count {a.shape[0]}",
                )
            )
            ok = False
        elif not np.all(np.isfinite(np.asarray(b, dtype=np.float64))):
            out.append(Diagnostic("NonFiniteValue", prim.name, "fix target has non-finite entries"))
            ok = False
    return ok


def _check_caus(prim: Primitive, spec: TheorySpec, out: list[Diagnostic]):
    dag: CausalGraph = prim.payload
    in_dim, out_dim = spec.signature.input_dim, spec.signature.output_dim
    if dag.num_vars != in_dim or dag.num_vars != out_dim:
        out.append(
            Diagnostic(
                "DimensionMismatch",
                prim.name,
                f"dag on {dag.num_vars} vars needs input = output = {dag.num_vars}, "
                f"found {in_dim} -> {out_dim}",
            )
        )
        return None
    for parent, child in dag.edges:
        if not (0 <= parent < dag.num_vars and 0 <= child < dag.num_vars):
            out.append(
                Diagnostic(
                    "DimensionMismatch",
                    prim.name,
                    f"edge ({parent},{child}) out of range 0..{dag.num_vars - 1}",
                )
            )
            return None
        if parent == child:
            out.append(Diagnostic("CycleInCausalGraph", prim.name, f"self-loop on {parent}"))
            return None
    order = topological_order(dag)
    if order is None:
        out.append(Diagnostic("CycleInCausalGraph", prim.name, "causal graph has a directed cycle"))
        return None
    return order


def _check_diff(prim: Primitive, spec: TheorySpec, out: list[Diagnostic]) -> bool:
    if (spec.signature.input_dim, spec.signature.output_dim) != (2, 2):
        out.append(
            Diagnostic(
                "DimensionMismatch",
                prim.name,
                "divfree2d requires input and output dimension 2, found "
                f"{spec.signature.input_dim} -> {spec.signature.output_dim}",
            )
        )
        return False
    return True


# --- pair compatibility ---------------------------------------------------------


def _pair_sym_cons(
    sym_name: str,
    sym: SymmetryGroup,
    table: tuple[Perm, ...],
    cons_name: str,
    law: ConservationLaw,
    input_dim: int,
) -> tuple[CompatibilityWitness | None, Diagnostic | None]:
    a, t, c = conservation_sides(law, input_dim)
    if sym.output_action == "invariant":
        # invariant outputs: the target side must itself be invariant
        worst = 0.0
        for g in table:
            p_in = groups.perm_matrix(g)
            res = float(np.max(np.abs(t @ p_in - t))) if t.size else 0.0
            worst = max(worst, res)
            if res > WITNESS_TOL:
                return None, Diagnostic(
                    "IncompatiblePrimitives",
                    f"{sym_name},{cons_name}",
                    f"T @ P_g != T for element perm{g}: invariant outputs cannot track "
                    "a non-invariant input functional",
                    res,
                )
        witness = CompatibilityWitness(
            (sym_name, cons_name), ("Sym", "Cons"), {"lambdas": None, "invariant": True}, worst
        )
        return witness, None

    pinv = a.T @ np.linalg.inv(a @ a.T)
    lambdas = []
    worst = 0.0
    for g in table:
        p = groups.perm_matrix(g)
        lam = a @ p @ pinv
        res = float(np.max(np.abs(a @ p - lam @ a)))
        if t.size:
            res = max(res, float(np.max(np.abs(t @ p - lam @ t))))
        if c.size:
            res = max(res, float(np.max(np.abs(lam @ c - c))))
        worst = max(worst, res)
        if res > WITNESS_TOL:
            return None, Diagnostic(
                "IncompatiblePrimitives",
                f"{sym_name},{cons_name}",
                f"no row-mixing L_g with A @ P_g = L_g @ A for element perm{g}",
                res,
            )
        lambdas.append(lam)
    witness = CompatibilityWitness(
        (sym_name, cons_name), ("Sym", "Cons"), {"lambdas": tuple(lambdas)}, worst
    )
    return witness, None


def _pair_sym_caus(
    sym_name: str,
    table: tuple[Perm, ...],
    caus_name: str,
    closure: np.ndarray,
) -> tuple[CompatibilityWitness | None, Diagnostic | None]:
    for g in table:
        idx = np.asarray(g)
        if not np.array_equal(closure[np.ix_(idx, idx)], closure):
            return None, Diagnostic(
                "IncompatiblePrimitives",
                f"{sym_name},{caus_name}",
                f"element perm{g} does not map the ancestor relation onto itself",
                1.0,
            )
    witness = CompatibilityWitness(
        (sym_name, caus_name), ("Sym", "Caus"), {"checked_elements": len(table)}, 0.0
    )
    return witness, None


def find_correction_sinks(a: np.ndarray, t: np.ndarray, closure: np.ndarray) -> list[int]:
    """Per conservation row, the variable that can absorb the correction.

    The terminal correction y = yh + R (t - A yh) keeps the causal mask only
    if each row's residual is routed into a single variable whose ancestor
    closure covers everything the residual can depend on: the ancestors of
    the row's support plus the input-side support.  Raises ValueError with
    the offending row when no such routing exists.
    """
    sinks: list[int] = []
    for r in range(a.shape[0]):
        support = set(np.nonzero(a[r])[0].tolist())
        if not support:
            raise ValueError(f"conservation row {r} is zero")
        needed: set[int] = set(np.nonzero(t[r])[0].tolist()) if t.size else set()
        for v in support:
            needed |= set(np.nonzero(closure[v])[0].tolist())
        sink = None
        for v in sorted(support):
            if needed <= set(np.nonzero(closure[v])[0].tolist()):
                sink = v
                break
        if sink is None:
            raise ValueError(
                f"conservation row {r} cannot be corrected without violating the "
                "causal mask (no support variable descends from the row's full "
                "dependency set)"
            )
        sinks.append(sink)
    for r in range(a.shape[0]):
        for q, sink in enumerate(sinks):
            if q != r and a[r, sink] != 0.0:
                raise ValueError(
                    f"conservation row {r} touches row {q}'s correction variable {sink}"
                )
    return sinks


def _pair_cons_caus(
    cons_name: str,
    law: ConservationLaw,
    caus_name: str,
    closure: np.ndarray,
    input_dim: int,
) -> tuple[CompatibilityWitness | None, Diagnostic | None]:
    a, t, _ = conservation_sides(law, input_dim)
    try:
        sinks = find_correction_sinks(a, t, closure)
    except ValueError as exc:
        return None, Diagnostic(
            "IncompatiblePrimitives", f"{cons_name},{caus_name}", str(exc), 1.0
        )
    witness = CompatibilityWitness(
        (cons_name, caus_name), ("Cons", "Caus"), {"sinks": tuple(sinks)}, 0.0
    )
    return witness, None


def _pair_check(
    a: Primitive,
    b: Primitive,
    spec: TheorySpec,
    tables: dict[str, tuple[Perm, ...]],
    closures: dict[str, np.ndarray],
) -> tuple[CompatibilityWitness | None, Diagnostic | None]:
    kinds = (a.kind, b.kind)
    if kinds == ("Cons", "Sym") or kinds == ("Caus", "Sym") or kinds == ("Caus", "Cons"):
        w, d = _pair_check(b, a, spec, tables, closures)
        if w is not None:
            w = CompatibilityWitness((a.name, b.name), kinds, w.data, w.max_residual)
        return w, d
    if kinds == ("Sym", "Cons"):
        return _pair_sym_cons(
            a.name, a.payload, tables[a.name], b.name, b.payload, spec.signature.input_dim
        )
    if kinds == ("Sym", "Caus"):
        return _pair_sym_caus(a.name, tables[a.name], b.name, closures[b.name])
    if kinds == ("Cons", "Caus"):
        return _pair_cons_caus(
            a.name, a.payload, b.name, closures[b.name], spec.signature.input_dim
        )
    raise UnsupportedPairError(
        f"no compatibility rule for kind pair ({a.kind}, {b.kind}) "
        f"on primitives ({a.name}, {b.name})"
    )


def check_compatibility(a: Primitive, b: Primitive, typed: TypedTheory) -> CompatibilityWitness:
    """Witness for one pair, or raise with the failing identity and residual."""
    witness, diag = _pair_check(a, b, typed.spec, typed.group_tables, typed.closures)
    if witness is None:
        raise CheckError([diag])
    return witness


# --- whole-theory check -----------------------------------------------------------


def check_wellformed(spec: TheorySpec, group_cap: int = DEFAULT_GROUP_CAP) -> TypedTheory:
    """Validate every primitive and relation; raise CheckError with all diagnostics."""
    diagnostics: list[Diagnostic] = []
    tables: dict[str, tuple[Perm, ...]] = {}
    topos: dict[str, tuple[int, ...]] = {}
    closures: dict[str, np.ndarray] = {}
    healthy: set[str] = set()

    for prim in spec.primitives:
        if prim.kind == "Sym":
            table = _check_sym(prim, spec, group_cap, diagnostics)
            if table is not None:
                tables[prim.name] = table
                healthy.add(prim.name)
        elif prim.kind == "Cons":
            if _check_cons(prim, spec, diagnostics):
                healthy.add(prim.name)
        elif prim.kind == "Caus":
            order = _check_caus(prim, spec, diagnostics)
            if order is not None:
                topos[prim.name] = order
                closures[prim.name] = reflexive_transitive_closure(prim.payload)
                healthy.add(prim.name)
        elif prim.kind == "Diff":
            if _check_diff(prim, spec, diagnostics):
                healthy.add(prim.name)

    witnesses: dict[tuple[str, str], CompatibilityWitness] = {}
    for rel in spec.relations:
        name_a, name_b = rel.args
        if name_a not in healthy or name_b not in healthy:
            continue  # the per-primitive diagnostic already covers it
        prim_a, prim_b = spec.primitive(name_a), spec.primitive(name_b)
        try:
            witness, diag = _pair_check(prim_a, prim_b, spec, tables, closures)
        except UnsupportedPairError as exc:
            diagnostics.append(Diagnostic("UnsupportedPair", f"{name_a},{name_b}", str(exc)))
            continue
        if witness is None:
            diagnostics.append(diag)
        else:
            witnesses[(name_a, name_b)] = witness

    if diagnostics:
        raise CheckError(diagnostics)
    return TypedTheory(spec, tables, topos, closures, witnesses, group_cap)


def diagnose(spec: TheorySpec, group_cap: int = DEFAULT_GROUP_CAP) -> list[Diagnostic]:
    """Like check_wellformed but returns the diagnostic list ([] = well-formed)."""
    try:
        check_wellformed(spec, group_cap)
    except CheckError as exc:
        return exc.diagnostics
    return []

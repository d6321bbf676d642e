"""Architecture synthesis: map typed primitives to modules and merge them.

The constraint-ordering policy is fixed: structural constraints (symmetry
tying, causal masks, the divergence-free head) fuse into the core stack, and
conservation projections apply terminally.  Joint cases are licensed by the
same constructive witnesses the type checker produces; a combination without
a sound merge is refused with UnsupportedPair rather than compiled loosely.
See docs/composition.md for the derivations behind each gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import groups
from .archir import ArchGraph, LayerNode, LossSpec, ParamSlot
from .errors import (
    DimensionMismatchError,
    MissingWitnessError,
    UnsupportedPairError,
)
from .groups import Perm
from .lang import CausalGraph, ConservationLaw, DiffConstraint, SymmetryGroup
from .typecheck import (
    TypedTheory,
    WITNESS_TOL,
    CompatibilityWitness,
    conservation_sides,
    find_correction_sinks,
    reflexive_transitive_closure,
)

Provenance = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class SynthConfig:
    """Free architectural choices the theory does not determine."""

    hidden_width: int = 32
    depth: int = 2  # number of linear layers in the core
    nonlinearity: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.hidden_width < 1 or self.depth < 1:
            raise ValueError("hidden_width and depth must be >= 1")

    def to_dict(self) -> dict:
        return {
            "hidden_width": self.hidden_width,
            "depth": self.depth,
            "nonlinearity": self.nonlinearity,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "SynthConfig":
        return SynthConfig(
            hidden_width=int(d.get("hidden_width", 32)),
            depth=int(d.get("depth", 2)),
            nonlinearity=str(d.get("nonlinearity", "tanh")),
            seed=int(d.get("seed", 0)),
        )


# --- internal layer descriptors ---------------------------------------------------


@dataclass
class _LayerDesc:
    width_in: int
    width_out: int
    ids: np.ndarray | None = None  # sharing pattern (orbit index per cell, -1 = zero)
    mask: np.ndarray | None = None  # plain 0/1 mask, no tying
    bias: bool = True
    provenance: Provenance = ()

    @property
    def kind(self) -> str:
        if self.ids is not None:
            return "shared_linear"
        if self.mask is not None:
            return "masked_dense"
        return "dense"


@dataclass
class _CurlDesc:
    features: int
    provenance: Provenance = ()


@dataclass
class _ProjDesc:
    matrix: np.ndarray
    input_matrix: np.ndarray | None
    offset: np.ndarray
    correction: np.ndarray
    provenance: Provenance = ()


@dataclass
class _CoreDesc:
    layers: list[_LayerDesc] = field(default_factory=list)
    curl: _CurlDesc | None = None


# --- single-primitive rules --------------------------------------------------------


def _actions_for_width(generators: tuple[Perm, ...], degree: int, width: int) -> list[Perm]:
    """Generator action on a width that is the degree or a per-variable blowup."""
    if width == degree:
        return [tuple(g) for g in generators]
    if width % degree == 0:
        channels = width // degree
        return [groups.blowup(g, channels) for g in generators]
    raise DimensionMismatchError(f"width {width} is not a multiple of group degree {degree}")


def _trivial_actions(count: int, width: int) -> list[Perm]:
    return [groups.identity(width) for _ in range(count)]


def rule_sym(group: SymmetryGroup, width_in: int, width_out: int) -> LayerNode:
    """Equivariant linear layer: one parameter per orbit of the pair action.

    output_action "same" ties cells along (i, j) -> (g(i), g(j)) on both
    sides (blown up per-variable when a width is a channel multiple of the
    degree); "invariant" ties columns only, leaving rows free.
    """
    gens = group.generators if group.generators else (groups.identity(group.degree),)
    col_perms = _actions_for_width(gens, group.degree, width_in)
    if group.output_action == "same":
        row_perms = _actions_for_width(gens, group.degree, width_out)
    else:
        row_perms = _trivial_actions(len(col_perms), width_out)
    ids = groups.pair_orbit_ids(row_perms, col_perms)
    return _layer_node(0, _LayerDesc(width_in, width_out, ids=ids, bias=False), slot_base=0)


def rule_cons(law: ConservationLaw, input_dim: int) -> LayerNode:
    """Hard conservation layer: y = yh + R (t - A yh) with R = A^T (A A^T)^-1.

    t is A_in x (preserve) or the fixed target (fix); the orthogonal
    correction makes the output the least-norm feasible point, so already
    feasible inputs pass through unchanged.
    """
    a, t, c = conservation_sides(law, input_dim)
    correction = a.T @ np.linalg.inv(a @ a.T)
    out_dim = a.shape[1]
    desc = _ProjDesc(a, t if law.mode == "preserve" else None, c, correction)
    return _projection_node(0, desc)


def rule_caus(dag: CausalGraph, cfg: SynthConfig) -> list[LayerNode]:
    """Masked stack whose end-to-end Jacobian sparsity follows the ancestor closure.

    Hidden units sit in per-variable channel blocks; every layer applies the
    reflexive-transitive closure blockwise, and closure @ closure = closure
    keeps the composition inside the allowed pattern for all parameters.
    """
    closure = reflexive_transitive_closure(dag)
    descs = _masked_core(dag.num_vars, closure, cfg)
    nodes: list[LayerNode] = []
    slot_base = 0
    for i, desc in enumerate(descs):
        node = _layer_node(len(nodes), desc, slot_base)
        slot_base += len(node.params)
        nodes.append(node)
        if i < len(descs) - 1:
            nodes.append(
                LayerNode(len(nodes), "pointwise", desc.width_out, desc.width_out,
                          fn=cfg.nonlinearity)
            )
    return nodes


def rule_diff(diff: DiffConstraint, cfg: SynthConfig) -> LayerNode:
    """Stream-function head: psi = sum_r a_r tanh(w_r x + v_r y + c_r).

    The output is the rotated gradient (dpsi/dy, -dpsi/dx) in closed form,
    so every realizable field has identically zero divergence.
    """
    if diff.variant != "divfree2d":
        raise UnsupportedPairError(f"unsupported differential constraint {diff.variant!r}")
    return _curl_node(0, _CurlDesc(cfg.hidden_width), slot_base=0)


# --- core construction -------------------------------------------------------------


def _free_core(input_dim: int, output_dim: int, cfg: SynthConfig) -> list[_LayerDesc]:
    if cfg.depth == 1:
        return [_LayerDesc(input_dim, output_dim)]
    widths = [input_dim] + [cfg.hidden_width] * (cfg.depth - 1) + [output_dim]
    return [_LayerDesc(widths[i], widths[i + 1]) for i in range(cfg.depth)]


def _block_mask(closure: np.ndarray, row_channels: int, col_channels: int) -> np.ndarray:
    return np.repeat(np.repeat(closure, row_channels, axis=0), col_channels, axis=1)


def _masked_core(n: int, closure: np.ndarray, cfg: SynthConfig, prov: Provenance = ()) -> list[_LayerDesc]:
    h = cfg.hidden_width
    if cfg.depth == 1:
        return [_LayerDesc(n, n, mask=closure.copy(), provenance=prov)]
    descs = [_LayerDesc(n, n * h, mask=_block_mask(closure, h, 1), provenance=prov)]
    for _ in range(cfg.depth - 2):
        descs.append(_LayerDesc(n * h, n * h, mask=_block_mask(closure, h, h), provenance=prov))
    descs.append(_LayerDesc(n * h, n, mask=_block_mask(closure, 1, h), provenance=prov))
    return descs


def _sym_core(
    gens: tuple[Perm, ...],
    degree: int,
    output_action: str,
    output_dim: int,
    cfg: SynthConfig,
    closure: np.ndarray | None,
    prov: Provenance = (),
) -> list[_LayerDesc]:
    """Equivariant stack; ties cells along the joint action, zeroes mask holes."""
    gens = gens if gens else (groups.identity(degree),)
    h = cfg.hidden_width
    n = degree

    def layer(width_in: int, width_out: int, trivial_rows: bool, allowed: np.ndarray | None) -> _LayerDesc:
        col_perms = _actions_for_width(gens, n, width_in)
        if trivial_rows:
            row_perms = _trivial_actions(len(gens), width_out)
        else:
            row_perms = _actions_for_width(gens, n, width_out)
        ids = groups.pair_orbit_ids(row_perms, col_perms, allowed)
        return _LayerDesc(width_in, width_out, ids=ids, bias=False, provenance=prov)

    def blocked(rows: int, cols: int) -> np.ndarray | None:
        if closure is None:
            return None
        return _block_mask(closure, rows // n, cols // n).astype(bool)

    if output_action == "same":
        if cfg.depth == 1:
            return [layer(n, n, False, blocked(n, n))]
        descs = [layer(n, n * h, False, blocked(n * h, n))]
        for _ in range(cfg.depth - 2):
            descs.append(layer(n * h, n * h, False, blocked(n * h, n * h)))
        descs.append(layer(n * h, n, False, blocked(n, n * h)))
        return descs

    # invariant: equivariant stack, then a column-tied readout with free rows
    if cfg.depth == 1:
        return [layer(n, output_dim, True, None)]
    descs = [layer(n, n * h, False, None)]
    for _ in range(cfg.depth - 2):
        descs.append(layer(n * h, n * h, False, None))
    descs.append(layer(n * h, output_dim, True, None))
    return descs


# --- projection construction --------------------------------------------------------


def _routed_correction(
    a: np.ndarray, t: np.ndarray, closure: np.ndarray, detail_prefix: str
) -> tuple[np.ndarray, list[int]]:
    """Correction matrix routing each row's residual into its witness sink."""
    try:
        sinks = find_correction_sinks(a, t, closure)
    except ValueError as exc:
        raise UnsupportedPairError(f"{detail_prefix}: {exc}") from exc
    correction = np.zeros((a.shape[1], a.shape[0]))
    for r, sink in enumerate(sinks):
        correction[sink, r] = 1.0 / a[r, sink]
    return correction, sinks


def _stack_projection(
    laws: list[tuple[str, ConservationLaw]],
    input_dim: int,
    output_dim: int,
    closure: np.ndarray | None,
) -> _ProjDesc:
    blocks = [conservation_sides(law, input_dim) for _, law in laws]
    a = np.concatenate([b[0] for b in blocks], axis=0)
    t = np.concatenate([b[1] for b in blocks], axis=0)
    c = np.concatenate([b[2] for b in blocks], axis=0)
    if a.shape[1] != output_dim:
        raise DimensionMismatchError(
            f"conservation matrices target width {a.shape[1]}, output is {output_dim}"
        )
    s = np.linalg.svd(a, compute_uv=False)
    if a.shape[0] > a.shape[1] or s[-1] <= 1e-10 * s[0]:
        raise UnsupportedPairError(
            "stacked conservation rows are jointly rank deficient: "
            + ",".join(name for name, _ in laws)
        )
    if closure is None:
        correction = a.T @ np.linalg.inv(a @ a.T)
        rule = "hard_projection[orthogonal]"
    else:
        correction, _ = _routed_correction(a, t, closure, "+".join(name for name, _ in laws))
        rule = "hard_projection[routed]"
    has_preserve = any(law.mode == "preserve" for _, law in laws)
    return _ProjDesc(
        matrix=a,
        input_matrix=t if has_preserve else None,
        offset=c,
        correction=correction,
        provenance=tuple((name, rule) for name, _ in laws),
    )


def _sym_projection_guard(
    table: tuple[Perm, ...],
    output_action: str,
    laws: list[tuple[str, ConservationLaw]],
    proj: _ProjDesc,
    input_dim: int,
) -> None:
    """Verify the terminal projection commutes with the group action."""
    a, t, c, r_mat = proj.matrix, proj.input_matrix, proj.offset, proj.correction
    pinv = a.T @ np.linalg.inv(a @ a.T)
    for g in table:
        p = groups.perm_matrix(g)
        if output_action == "invariant":
            if t is not None:
                res = float(np.max(np.abs(t @ p - t)))
                if res > WITNESS_TOL:
                    raise UnsupportedPairError(
                        f"projection target is not invariant under perm{g} (residual {res:.3e})"
                    )
            continue
        lam = a @ p @ pinv
        res = float(np.max(np.abs(a @ p - lam @ a)))
        if t is not None:
            res = max(res, float(np.max(np.abs(t @ p - lam @ t))))
        res = max(res, float(np.max(np.abs(lam @ c - c))))
        res = max(res, float(np.max(np.abs(p @ r_mat - r_mat @ lam))))
        if res > WITNESS_TOL:
            names = ",".join(name for name, _ in laws)
            raise UnsupportedPairError(
                f"projection ({names}) does not commute with the group action at "
                f"perm{g} (residual {res:.3e})"
            )


# --- node/graph assembly -------------------------------------------------------------


def _layer_node(node_id: int, desc: _LayerDesc, slot_base: int) -> LayerNode:
    params: list[ParamSlot] = []
    if desc.ids is not None:
        count = int(desc.ids.max()) + 1
        params.append(ParamSlot(slot_base, (count,), "orbit_weights"))
        return LayerNode(
            node_id,
            "shared_linear",
            desc.width_in,
            desc.width_out,
            tuple(params),
            slot_ids=desc.ids,
        )
    params.append(ParamSlot(slot_base, (desc.width_out, desc.width_in), "weight"))
    if desc.bias:
        params.append(ParamSlot(slot_base + 1, (desc.width_out,), "bias"))
    if desc.mask is not None:
        return LayerNode(
            node_id,
            "masked_dense",
            desc.width_in,
            desc.width_out,
            tuple(params),
            mask=desc.mask.astype(np.int64),
        )
    return LayerNode(node_id, "dense", desc.width_in, desc.width_out, tuple(params))


def _curl_node(node_id: int, desc: _CurlDesc, slot_base: int) -> LayerNode:
    m = desc.features
    params = (
        ParamSlot(slot_base, (m,), "amplitude"),
        ParamSlot(slot_base + 1, (m,), "wx"),
        ParamSlot(slot_base + 2, (m,), "wy"),
        ParamSlot(slot_base + 3, (m,), "shift"),
    )
    return LayerNode(node_id, "curl_head", 2, 2, params, features=m)


def _projection_node(node_id: int, desc: _ProjDesc) -> LayerNode:
    k, width = desc.matrix.shape
    return LayerNode(
        node_id,
        "projection",
        width,
        width,
        (),
        matrix=desc.matrix,
        input_matrix=desc.input_matrix,
        offset=desc.offset,
        correction=desc.correction,
    )


def _assemble(
    theory_name: str,
    input_dim: int,
    output_dim: int,
    cfg: SynthConfig,
    core: _CoreDesc,
    proj: _ProjDesc | None,
) -> ArchGraph:
    nodes: list[LayerNode] = []
    edges: list[tuple[int, int, int]] = []
    provenance: dict[int, Provenance] = {}
    slot_base = 0

    nodes.append(LayerNode(0, "input", 0, input_dim))
    prev = 0
    if core.curl is not None:
        node = _curl_node(1, core.curl, slot_base)
        slot_base += len(node.params)
        nodes.append(node)
        edges.append((prev, node.node_id, 0))
        if core.curl.provenance:
            provenance[node.node_id] = core.curl.provenance
        prev = node.node_id
    else:
        for i, desc in enumerate(core.layers):
            node = _layer_node(len(nodes), desc, slot_base)
            slot_base += len(node.params)
            nodes.append(node)
            edges.append((prev, node.node_id, 0))
            if desc.provenance:
                provenance[node.node_id] = desc.provenance
            prev = node.node_id
            if i < len(core.layers) - 1:
                pw = LayerNode(len(nodes), "pointwise", desc.width_out, desc.width_out, fn=cfg.nonlinearity)
                nodes.append(pw)
                edges.append((prev, pw.node_id, 0))
                prev = pw.node_id

    if proj is not None:
        node = _projection_node(len(nodes), proj)
        nodes.append(node)
        edges.append((prev, node.node_id, 0))
        if proj.input_matrix is not None:
            edges.append((0, node.node_id, 1))
        provenance[node.node_id] = proj.provenance
        prev = node.node_id

    out_node = LayerNode(len(nodes), "output", output_dim, output_dim)
    nodes.append(out_node)
    edges.append((prev, out_node.node_id, 0))

    return ArchGraph(
        nodes=tuple(nodes),
        edges=tuple(edges),
        input_dim=input_dim,
        output_dim=output_dim,
        theory=theory_name,
        provenance=provenance,
        loss=LossSpec("mse", "free choice; not determined by the theory"),
        config=cfg.to_dict(),
    )


def identity_graph(dim: int, name: str = "identity") -> ArchGraph:
    """Input wired straight to output; neutral element for composition."""
    nodes = (LayerNode(0, "input", 0, dim), LayerNode(1, "output", dim, dim))
    return ArchGraph(nodes, ((0, 1, 0),), dim, dim, theory=name)


# --- whole-theory compilation ----------------------------------------------------------


def compile_theory(typed: TypedTheory, cfg: SynthConfig = SynthConfig()) -> ArchGraph:
    """Compile a well-formed theory into a model graph.

    Deterministic in (typed, cfg).  Every constrained node carries provenance
    back to its source primitive; free structure (depths, widths) is recorded
    as configuration so certificates can separate forced from free choices.
    """
    spec = typed.spec
    sig = spec.signature
    syms = [p for p in spec.primitives if p.kind == "Sym"]
    conss = [p for p in spec.primitives if p.kind == "Cons"]
    causs = [p for p in spec.primitives if p.kind == "Caus"]
    diffs = [p for p in spec.primitives if p.kind == "Diff"]

    if diffs:
        if len(diffs) > 1 or syms or causs or conss:
            others = [p.name for p in spec.primitives if p.name != diffs[0].name]
            raise UnsupportedPairError(
                f"divfree2d ({diffs[0].name}) has no joint rule with {others}"
            )
        core = _CoreDesc(curl=_CurlDesc(cfg.hidden_width, ((diffs[0].name, "stream_function_curl"),)))
        return _assemble(spec.name, sig.input_dim, sig.output_dim, cfg, core, None)

    # structural side: merge symmetry groups and causal closures
    merged_gens: tuple[Perm, ...] = ()
    merged_table: tuple[Perm, ...] = ()
    action = None
    if syms:
        actions = {p.payload.output_action for p in syms}
        if len(actions) > 1:
            raise UnsupportedPairError(
                "symmetry primitives with mixed output actions cannot be merged: "
                + ",".join(p.name for p in syms)
            )
        action = actions.pop()
        merged_gens = tuple(g for p in syms for g in p.payload.generators)
        merged_table = tuple(
            groups.enumerate_group(merged_gens, sig.input_dim, typed.group_cap)
        )

    closure = None
    if causs:
        closure = typed.closures[causs[0].name].copy()
        for p in causs[1:]:
            closure &= typed.closures[p.name]

    if syms and causs:
        if action == "invariant":
            raise UnsupportedPairError(
                "invariant symmetry cannot be merged with a causal mask: "
                + ",".join(p.name for p in syms + causs)
            )
        for g in merged_table:
            idx = np.asarray(g)
            if not np.array_equal(closure[np.ix_(idx, idx)], closure):
                raise UnsupportedPairError(
                    f"group element perm{g} does not preserve the merged ancestor "
                    "relation; symmetry and causal primitives are incompatible"
                )

    sym_prov = tuple((p.name, f"equivariant_tying[{action}]") for p in syms)
    caus_prov = tuple((p.name, "causal_mask") for p in causs)

    core = _CoreDesc()
    if syms:
        core.layers = _sym_core(
            merged_gens,
            sig.input_dim,
            action,
            sig.output_dim,
            cfg,
            closure,
            sym_prov + caus_prov,
        )
    elif causs:
        core.layers = _masked_core(sig.input_dim, closure, cfg, caus_prov)
    else:
        core.layers = _free_core(sig.input_dim, sig.output_dim, cfg)

    proj = None
    if conss:
        laws = [(p.name, p.payload) for p in conss]
        proj = _stack_projection(laws, sig.input_dim, sig.output_dim, closure)
        if syms:
            _sym_projection_guard(merged_table, action, laws, proj, sig.input_dim)

    return _assemble(spec.name, sig.input_dim, sig.output_dim, cfg, core, proj)


# --- graph-level composition ------------------------------------------------------------


@dataclass
class _Parts:
    linear: list[LayerNode]
    pointwise_fns: list[str]
    curl: LayerNode | None
    projection: LayerNode | None
    provenance: dict[int, Provenance]
    structural: bool  # any core node carries primitive provenance
    sym_same_core: bool
    masked_core: bool


def _split_parts(g: ArchGraph) -> _Parts:
    linear: list[LayerNode] = []
    fns: list[str] = []
    curl = None
    projection = None
    for node in g.nodes:
        if node.kind in ("dense", "shared_linear", "masked_dense"):
            linear.append(node)
        elif node.kind == "pointwise":
            fns.append(node.fn)
        elif node.kind == "curl_head":
            curl = node
        elif node.kind == "projection":
            projection = node
        elif node.kind in ("input", "output"):
            continue
        else:
            raise UnsupportedPairError(f"cannot compose through node kind {node.kind!r}")
    structural = any(
        g.provenance.get(n.node_id) for n in linear
    ) or curl is not None
    rules = [
        rule for n in linear for _, rule in g.provenance.get(n.node_id, ())
    ]
    sym_same = any(r.startswith("equivariant_tying[same]") for r in rules)
    masked = any(r == "causal_mask" for r in rules)
    return _Parts(linear, fns, curl, projection, dict(g.provenance), structural, sym_same, masked)


def _node_pattern(node: LayerNode) -> tuple[np.ndarray | None, np.ndarray, bool]:
    """(orbit ids or None, allowed mask, has bias) canonical form of a linear node."""
    if node.kind == "shared_linear":
        return node.slot_ids, node.slot_ids >= 0, False
    if node.kind == "masked_dense":
        return None, node.mask.astype(bool), True
    return None, np.ones((node.width_out, node.width_in), dtype=bool), True


def _merge_patterns(a: LayerNode, b: LayerNode) -> _LayerDesc:
    """Conjunction of two linear-layer constraint sets on aligned widths.

    Cells tie when either side ties them (partition join); a cell is zero
    when either side zeroes it, and any tied component touching a zero cell
    is zeroed entirely.
    """
    ids_a, allowed_a, bias_a = _node_pattern(a)
    ids_b, allowed_b, bias_b = _node_pattern(b)
    rows, cols = allowed_a.shape
    total = rows * cols
    parent = list(range(total))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[ry] = rx

    for ids in (ids_a, ids_b):
        if ids is None:
            continue
        first: dict[int, int] = {}
        flat = ids.reshape(-1)
        for cell in range(total):
            oid = int(flat[cell])
            if oid < 0:
                continue
            if oid in first:
                union(first[oid], cell)
            else:
                first[oid] = cell

    allowed = (allowed_a & allowed_b).reshape(-1)
    comp_allowed: dict[int, bool] = {}
    for cell in range(total):
        root = find(cell)
        comp_allowed[root] = comp_allowed.get(root, True) and bool(allowed[cell])

    merged = np.full(total, -1, dtype=np.int64)
    numbering: dict[int, int] = {}
    for cell in range(total):
        root = find(cell)
        if not comp_allowed[root]:
            continue
        if root not in numbering:
            numbering[root] = len(numbering)
        merged[cell] = numbering[root]
    merged = merged.reshape(rows, cols)

    any_tying = ids_a is not None or ids_b is not None
    all_free = bool((merged >= 0).all()) and len(numbering) == total
    if any_tying:
        return _LayerDesc(a.width_in, a.width_out, ids=merged, bias=bias_a and bias_b)
    if all_free:
        return _LayerDesc(a.width_in, a.width_out, bias=bias_a and bias_b)
    return _LayerDesc(
        a.width_in, a.width_out, mask=(merged >= 0).astype(np.int64), bias=bias_a and bias_b
    )


def _closure_from_layers(layers: list[_LayerDesc], input_dim: int) -> np.ndarray | None:
    """Recover the per-variable ancestor mask from the first masked core layer."""
    if not layers:
        return None
    first = layers[0]
    if first.ids is not None:
        allowed = first.ids >= 0
    elif first.mask is not None:
        allowed = first.mask.astype(bool)
    else:
        return None
    if allowed.all():
        return None
    n = input_dim
    h = first.width_out // n
    blocks = allowed.reshape(n, h, n)
    return blocks.any(axis=1).astype(np.int64)


def _witness_list(witness) -> list[CompatibilityWitness]:
    if witness is None:
        return []
    if isinstance(witness, CompatibilityWitness):
        return [witness]
    return list(witness)


def compose(ga: ArchGraph, gb: ArchGraph, witness=None) -> ArchGraph:
    """Conjunction of two compiled models by ordered rewiring.

    Structural cores merge cell-wise (tying joins, masks intersect) and
    projections stack terminally with the correction matrix rebuilt for the
    merged core.  A witness is required whenever a projection lands on a
    symmetry-tied core with permuted outputs, or on a causally masked core.
    """
    if (ga.input_dim, ga.output_dim) != (gb.input_dim, gb.output_dim):
        raise DimensionMismatchError(
            f"cannot compose {ga.input_dim}->{ga.output_dim} with {gb.input_dim}->{gb.output_dim}"
        )
    if ga.config and gb.config and ga.config != gb.config:
        raise UnsupportedPairError("graphs were compiled with different configurations")
    cfg = SynthConfig.from_dict(ga.config or gb.config or {})
    pa, pb = _split_parts(ga), _split_parts(gb)
    witnesses = _witness_list(witness)

    def has_witness(kinds: set[str]) -> bool:
        return any(set(w.kinds) == kinds for w in witnesses)

    # a witness is owed exactly for pairings that cross the two source graphs;
    # pairings already inside one graph were licensed when it was compiled
    if (pa.sym_same_core and pb.projection is not None) or (
        pb.sym_same_core and pa.projection is not None
    ):
        if not has_witness({"Sym", "Cons"}):
            raise MissingWitnessError(
                "projection onto a permutation-equivariant core requires a (Sym, Cons) witness"
            )
    if (pa.masked_core and pb.projection is not None) or (
        pb.masked_core and pa.projection is not None
    ):
        if not has_witness({"Cons", "Caus"}):
            raise MissingWitnessError(
                "projection onto a causally masked core requires a (Cons, Caus) witness"
            )
    if (pa.sym_same_core and pb.masked_core) or (pb.sym_same_core and pa.masked_core):
        if not has_witness({"Sym", "Caus"}):
            raise MissingWitnessError(
                "merging symmetry tying with a causal mask requires a (Sym, Caus) witness"
            )

    def prov_of(parts: _Parts, node: LayerNode) -> Provenance:
        return parts.provenance.get(node.node_id, ())

    # merge cores
    curl = None
    layers: list[_LayerDesc] = []
    if pa.curl is not None or pb.curl is not None:
        curl_parts, other = (pa, pb) if pa.curl is not None else (pb, pa)
        if other.structural or other.projection is not None or (
            pa.curl is not None and pb.curl is not None
        ):
            raise UnsupportedPairError(
                "a divergence-free head only composes with an unconstrained model"
            )
        node = curl_parts.curl
        curl = _CurlDesc(node.features, prov_of(curl_parts, node))
    elif pa.structural and pb.structural:
        if len(pa.linear) != len(pb.linear):
            raise UnsupportedPairError("core depths differ; cannot align layer stacks")
        for na, nb in zip(pa.linear, pb.linear):
            if (na.width_in, na.width_out) != (nb.width_in, nb.width_out):
                raise UnsupportedPairError("core layer widths differ; cannot merge patterns")
            desc = _merge_patterns(na, nb)
            desc.provenance = prov_of(pa, na) + prov_of(pb, nb)
            layers.append(desc)
    else:
        src_parts = pa if (pa.structural or not pb.structural) else pb
        for node in src_parts.linear:
            ids, allowed, bias = _node_pattern(node)
            layers.append(
                _LayerDesc(
                    node.width_in,
                    node.width_out,
                    ids=None if ids is None else ids.copy(),
                    mask=None if ids is not None or allowed.all() else allowed.astype(np.int64),
                    bias=bias,
                    provenance=prov_of(src_parts, node),
                )
            )

    core = _CoreDesc(layers=layers, curl=curl)

    # merge projections
    proj = None
    proj_nodes = [(pa, pa.projection), (pb, pb.projection)]
    proj_nodes = [(parts, node) for parts, node in proj_nodes if node is not None]
    if proj_nodes:
        if curl is not None:
            raise UnsupportedPairError("projections cannot follow a divergence-free head")
        a = np.concatenate([node.matrix for _, node in proj_nodes], axis=0)
        input_dim = ga.input_dim
        t_rows = []
        for _, node in proj_nodes:
            if node.input_matrix is not None:
                t_rows.append(node.input_matrix)
            else:
                t_rows.append(np.zeros((node.matrix.shape[0], input_dim)))
        t = np.concatenate(t_rows, axis=0)
        c = np.concatenate([node.offset for _, node in proj_nodes], axis=0)
        s = np.linalg.svd(a, compute_uv=False)
        if a.shape[0] > a.shape[1] or s[-1] <= 1e-10 * s[0]:
            raise UnsupportedPairError("stacked conservation rows are jointly rank deficient")

        merged_closure = _closure_from_layers(layers, ga.input_dim)
        if merged_closure is not None:
            correction, _ = _routed_correction(a, t, merged_closure, "composition")
            rule = "hard_projection[routed]"
        else:
            correction = a.T @ np.linalg.inv(a @ a.T)
            rule = "hard_projection[orthogonal]"
        prov: Provenance = tuple(
            (name, rule)
            for parts, node in proj_nodes
            for name, _ in parts.provenance.get(node.node_id, ())
        )
        has_preserve = any(node.input_matrix is not None for _, node in proj_nodes)
        proj = _ProjDesc(a, t if has_preserve else None, c, correction, prov)

    theory = f"{ga.theory}_and_{gb.theory}"
    if not core.layers and core.curl is None and proj is None:
        return identity_graph(ga.input_dim, theory)
    return _assemble(theory, ga.input_dim, ga.output_dim, cfg, core, proj)

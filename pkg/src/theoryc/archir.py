"""Architecture intermediate representation: a typed computation graph.

Nodes are layers with declared widths and parameter slots; edges carry
(producer, consumer, port).  Parameter slots hold shapes only — values live
in the interpreter's ParamSet, so certificates can quantify over them.
Graphs serialize to JSON (".archir", schema version 1) with every matrix,
mask, and sharing pattern stored explicitly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatchError

ARCHIR_VERSION = 1

NODE_KINDS = (
    "input",
    "output",
    "dense",
    "shared_linear",
    "masked_dense",
    "projection",
    "pointwise",
    "curl_head",
    "concat",
)

POINTWISE_FNS = ("tanh",)


@dataclass(frozen=True)
class ParamSlot:
    slot_id: int
    shape: tuple[int, ...]
    name: str


@dataclass(frozen=True, eq=False)
class LayerNode:
    node_id: int
    kind: str
    width_in: int
    width_out: int
    params: tuple[ParamSlot, ...] = ()
    slot_ids: np.ndarray | None = None  # shared_linear: orbit index per cell, -1 = zero
    mask: np.ndarray | None = None  # masked_dense: 0/1 over (out, in)
    matrix: np.ndarray | None = None  # projection: A, shape (k, width_out)
    input_matrix: np.ndarray | None = None  # projection: T, shape (k, graph input dim)
    offset: np.ndarray | None = None  # projection: c, shape (k,)
    correction: np.ndarray | None = None  # projection: R, shape (width_out, k)
    fn: str | None = None  # pointwise nonlinearity name
    features: int | None = None  # curl_head stream-function width

    def slot(self, name: str) -> ParamSlot:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(f"node {self.node_id} has no param {name!r}")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "mse"  # "mse" | "cross_entropy"
    note: str = ""


@dataclass(frozen=True, eq=False)
class ArchGraph:
    nodes: tuple[LayerNode, ...]
    edges: tuple[tuple[int, int, int], ...]  # (producer, consumer, port)
    input_dim: int
    output_dim: int
    theory: str = ""
    provenance: dict[int, tuple[tuple[str, str], ...]] = field(default_factory=dict)
    loss: LossSpec = LossSpec()
    config: dict = field(default_factory=dict)

    def node(self, node_id: int) -> LayerNode:
        return self.nodes[node_id]

    @property
    def input_node(self) -> LayerNode:
        return next(n for n in self.nodes if n.kind == "input")

    @property
    def output_node(self) -> LayerNode:
        return next(n for n in self.nodes if n.kind == "output")

    def producers(self, node_id: int) -> list[tuple[int, int]]:
        """(producer id, port) pairs feeding node_id, sorted by port."""
        return sorted(((s, p) for s, d, p in self.edges if d == node_id), key=lambda e: e[1])

    def max_slot_id(self) -> int:
        slots = [p.slot_id for n in self.nodes for p in n.params]
        return max(slots) if slots else -1


@dataclass(frozen=True)
class GraphIssue:
    code: str
    node_id: int | None
    detail: str


def _expected_port_widths(g: ArchGraph, node: LayerNode) -> list[int]:
    if node.kind == "input":
        return []
    if node.kind == "projection" and node.input_matrix is not None:
        return [node.width_in, node.input_matrix.shape[1]]
    if node.kind == "concat":
        widths = [g.node(s).width_out for s, _ in g.producers(node.node_id)]
        return widths  # checked against width_out as a sum below
    return [node.width_in]


def validate_graph(g: ArchGraph) -> list[GraphIssue]:
    """Structural diagnostics; empty list iff the graph is a valid model."""
    issues: list[GraphIssue] = []
    ids = [n.node_id for n in g.nodes]
    if ids != list(range(len(g.nodes))):
        issues.append(GraphIssue("BadNodeIds", None, "node ids must be 0..n-1 in order"))
        return issues

    inputs = [n for n in g.nodes if n.kind == "input"]
    outputs = [n for n in g.nodes if n.kind == "output"]
    if len(inputs) != 1:
        issues.append(GraphIssue("InputCount", None, f"expected exactly 1 input node, found {len(inputs)}"))
    if len(outputs) != 1:
        issues.append(GraphIssue("OutputCount", None, f"expected exactly 1 output node, found {len(outputs)}"))
    if inputs and inputs[0].width_out != g.input_dim:
        issues.append(GraphIssue("WidthMismatch", inputs[0].node_id, "input node width != graph input_dim"))
    if outputs and outputs[0].width_in != g.output_dim:
        issues.append(GraphIssue("WidthMismatch", outputs[0].node_id, "output node width != graph output_dim"))

    for src, dst, _ in g.edges:
        if not (0 <= src < len(g.nodes) and 0 <= dst < len(g.nodes)):
            issues.append(GraphIssue("BadEdge", None, f"edge ({src},{dst}) out of range"))
            return issues

    # cycle check via Kahn over the edge relation
    indeg = {n.node_id: 0 for n in g.nodes}
    for _, dst, _ in g.edges:
        indeg[dst] += 1
    ready = [i for i, d in sorted(indeg.items()) if d == 0]
    seen = 0
    while ready:
        v = ready.pop(0)
        seen += 1
        for s, d, _ in g.edges:
            if s == v:
                indeg[d] -= 1
                if indeg[d] == 0:
                    ready.append(d)
    if seen != len(g.nodes):
        issues.append(GraphIssue("CyclicGraph", None, "computation graph contains a cycle"))
        return issues

    seen_slots: set[int] = set()
    for node in g.nodes:
        if node.kind not in NODE_KINDS:
            issues.append(GraphIssue("UnknownKind", node.node_id, f"unknown node kind {node.kind!r}"))
            continue
        for p in node.params:
            if p.slot_id in seen_slots:
                issues.append(GraphIssue("DuplicateSlot", node.node_id, f"slot {p.slot_id} reused"))
            seen_slots.add(p.slot_id)

        got = g.producers(node.node_id)
        expected = _expected_port_widths(g, node)
        if node.kind == "concat":
            if sum(g.node(s).width_out for s, _ in got) != node.width_out:
                issues.append(GraphIssue("WidthMismatch", node.node_id, "concat inputs do not sum to width_out"))
        else:
            if len(got) != len(expected):
                issues.append(
                    GraphIssue(
                        "PortCount",
                        node.node_id,
                        f"expected {len(expected)} inputs, found {len(got)}",
                    )
                )
            else:
                for (src, port), want in zip(got, expected):
                    if g.node(src).width_out != want:
                        issues.append(
                            GraphIssue(
                                "WidthMismatch",
                                node.node_id,
                                f"port {port} expects width {want}, producer {src} "
                                f"emits {g.node(src).width_out}",
                            )
                        )

        if node.kind == "pointwise":
            if node.width_in != node.width_out:
                issues.append(GraphIssue("WidthMismatch", node.node_id, "pointwise must preserve width"))
            if node.fn not in POINTWISE_FNS:
                issues.append(GraphIssue("UnknownFn", node.node_id, f"unknown nonlinearity {node.fn!r}"))
        elif node.kind == "shared_linear":
            sid = node.slot_ids
            if sid is None or sid.shape != (node.width_out, node.width_in):
                issues.append(GraphIssue("BadSharing", node.node_id, "slot_ids shape mismatch"))
            else:
                used = np.unique(sid[sid >= 0])
                count = node.slot("orbit_weights").shape[0]
                if used.size != count or (used.size and (used.min() != 0 or used.max() != count - 1)):
                    issues.append(
                        GraphIssue(
                            "BadSharing",
                            node.node_id,
                            "sharing pattern does not cover slots 0..k-1 exactly",
                        )
                    )
        elif node.kind == "masked_dense":
            if node.mask is None or node.mask.shape != (node.width_out, node.width_in):
                issues.append(GraphIssue("BadMask", node.node_id, "mask shape mismatch"))
            elif not np.isin(node.mask, (0, 1)).all():
                issues.append(GraphIssue("BadMask", node.node_id, "mask entries must be 0 or 1"))
        elif node.kind == "projection":
            a = node.matrix
            if a is None or a.shape[1] != node.width_out or node.width_in != node.width_out:
                issues.append(GraphIssue("WidthMismatch", node.node_id, "projection matrix shape mismatch"))
            else:
                s = np.linalg.svd(a, compute_uv=False)
                if s[-1] <= 1e-10 * s[0]:
                    issues.append(
                        GraphIssue("RankDeficientProjection", node.node_id, "matrix is row rank deficient")
                    )
                if node.correction is None or node.correction.shape != (a.shape[1], a.shape[0]):
                    issues.append(GraphIssue("BadCorrection", node.node_id, "correction shape mismatch"))
        elif node.kind == "curl_head":
            if node.width_in != 2 or node.width_out != 2 or not node.features:
                issues.append(GraphIssue("WidthMismatch", node.node_id, "curl head is 2 -> 2 only"))
    return issues


# --- serialization ---------------------------------------------------------------


def _arr(a: np.ndarray | None):
    return None if a is None else a.tolist()


def _node_to_json(node: LayerNode) -> dict:
    return {
        "id": node.node_id,
        "kind": node.kind,
        "width_in": node.width_in,
        "width_out": node.width_out,
        "params": [
            {"slot": p.slot_id, "shape": list(p.shape), "name": p.name} for p in node.params
        ],
        "slot_ids": _arr(node.slot_ids),
        "mask": _arr(node.mask),
        "matrix": _arr(node.matrix),
        "input_matrix": _arr(node.input_matrix),
        "offset": _arr(node.offset),
        "correction": _arr(node.correction),
        "fn": node.fn,
        "features": node.features,
    }


def _node_from_json(obj: dict) -> LayerNode:
    def arr(key, dtype):
        raw = obj.get(key)
        return None if raw is None else np.asarray(raw, dtype=dtype)

    return LayerNode(
        node_id=obj["id"],
        kind=obj["kind"],
        width_in=obj["width_in"],
        width_out=obj["width_out"],
        params=tuple(ParamSlot(p["slot"], tuple(p["shape"]), p["name"]) for p in obj["params"]),
        slot_ids=arr("slot_ids", np.int64),
        mask=arr("mask", np.int64),
        matrix=arr("matrix", np.float64),
        input_matrix=arr("input_matrix", np.float64),
        offset=arr("offset", np.float64),
        correction=arr("correction", np.float64),
        fn=obj.get("fn"),
        features=obj.get("features"),
    )


def to_json(g: ArchGraph) -> str:
    doc = {
        "archir_version": ARCHIR_VERSION,
        "theory": g.theory,
        "input_dim": g.input_dim,
        "output_dim": g.output_dim,
        "config": g.config,
        "loss": {"kind": g.loss.kind, "note": g.loss.note},
        "nodes": [_node_to_json(n) for n in g.nodes],
        "edges": [list(e) for e in g.edges],
        "provenance": {str(k): [list(p) for p in v] for k, v in sorted(g.provenance.items())},
    }
    return json.dumps(doc, indent=1) + "\n"


def from_json(text: str) -> ArchGraph:
    doc = json.loads(text)
    if doc.get("archir_version") != ARCHIR_VERSION:
        raise ValueError(f"unsupported archir_version {doc.get('archir_version')!r}")
    return ArchGraph(
        nodes=tuple(_node_from_json(n) for n in doc["nodes"]),
        edges=tuple((e[0], e[1], e[2]) for e in doc["edges"]),
        input_dim=doc["input_dim"],
        output_dim=doc["output_dim"],
        theory=doc.get("theory", ""),
        provenance={
            int(k): tuple((p[0], p[1]) for p in v) for k, v in doc.get("provenance", {}).items()
        },
        loss=LossSpec(doc["loss"]["kind"], doc["loss"].get("note", "")),
        config=doc.get("config", {}),
    )


def sha256_of(text: str | bytes) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


# --- sequential composition -------------------------------------------------------


def compose_sequential(g1: ArchGraph, g2: ArchGraph) -> ArchGraph:
    """Single graph computing g2 after g1.

    g1's output node and g2's input node disappear; every edge into g1's
    output is rewired to the consumers of g2's input.  g2's node ids and
    parameter slot ids shift by fixed offsets (g1 node count - 1 and
    g1.max_slot_id() + 1), so parameter sets transport deterministically.
    """
    if g1.output_dim != g2.input_dim:
        raise DimensionMismatchError(
            f"cannot chain output width {g1.output_dim} into input width {g2.input_dim}"
        )
    out1 = g1.output_node.node_id
    in2 = g2.input_node.node_id
    feeders = [src for src, dst, _ in g1.edges if dst == out1]

    slot_offset = g1.max_slot_id() + 1
    keep1 = [n for n in g1.nodes if n.node_id != out1]
    keep2 = [n for n in g2.nodes if n.node_id != in2]
    id_map1 = {n.node_id: i for i, n in enumerate(keep1)}
    id_map2 = {n.node_id: i + len(keep1) for i, n in enumerate(keep2)}

    nodes: list[LayerNode] = []
    for n in keep1:
        nodes.append(replace(n, node_id=id_map1[n.node_id]))
    for n in keep2:
        shifted = tuple(ParamSlot(p.slot_id + slot_offset, p.shape, p.name) for p in n.params)
        nodes.append(replace(n, node_id=id_map2[n.node_id], params=shifted))

    edges: list[tuple[int, int, int]] = []
    for src, dst, port in g1.edges:
        if dst != out1:
            edges.append((id_map1[src], id_map1[dst], port))
    for src, dst, port in g2.edges:
        if src == in2:
            for feeder in feeders:
                edges.append((id_map1[feeder], id_map2[dst], port))
        else:
            edges.append((id_map2[src], id_map2[dst], port))

    provenance: dict[int, tuple[tuple[str, str], ...]] = {}
    for old, new in id_map1.items():
        if old in g1.provenance:
            provenance[new] = g1.provenance[old]
    for old, new in id_map2.items():
        if old in g2.provenance:
            provenance[new] = g2.provenance[old]

    return ArchGraph(
        nodes=tuple(nodes),
        edges=tuple(edges),
        input_dim=g1.input_dim,
        output_dim=g2.output_dim,
        theory=f"{g1.theory};{g2.theory}",
        provenance=provenance,
        loss=g2.loss,
        config=dict(g1.config),
    )

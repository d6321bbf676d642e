"""Reference interpreter: parameter init, forward evaluation, FD Jacobians.

Everything is float64 and bitwise deterministic.  Parameter values come from
a counter-based stream keyed by (seed, slot id, element index), so results
never depend on iteration order.  forward accepts a single input vector or a
batch (rows = samples); all layer math is expressed batch-first so the same
code path serves certification sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .archir import ArchGraph, LayerNode
from .errors import NonFiniteValueError, ShapeMismatchError


@dataclass
class ParamSet:
    """Values for every declared parameter slot of one graph."""

    slots: dict[int, np.ndarray]

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self.slots.items()})


def slot_values(seed: int, slot_id: int, shape: tuple[int, ...], bound: float) -> np.ndarray:
    """The deterministic fill for one slot: uniform on [-bound, bound)."""
    count = int(np.prod(shape)) if shape else 1
    vals = rng.uniform_signed(rng.mix(seed, slot_id), count, bound)
    return vals.reshape(shape)


def init_params(g: ArchGraph, seed: int) -> ParamSet:
    """i.i.d. uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)] per slot."""
    slots: dict[int, np.ndarray] = {}
    for node in g.nodes:
        bound = 1.0 / np.sqrt(max(node.width_in, 1))
        for p in node.params:
            slots[p.slot_id] = slot_values(seed, p.slot_id, p.shape, bound)
    return ParamSet(slots)


def materialize_weight(node: LayerNode, params: ParamSet) -> np.ndarray:
    """Dense weight matrix for a linear-family node under given parameters."""
    if node.kind == "dense":
        return params.slots[node.slot("weight").slot_id]
    if node.kind == "masked_dense":
        return params.slots[node.slot("weight").slot_id] * node.mask
    if node.kind == "shared_linear":
        w = params.slots[node.slot("orbit_weights").slot_id]
        ids = node.slot_ids
        return np.where(ids >= 0, w[np.clip(ids, 0, None)], 0.0)
    raise ValueError(f"node kind {node.kind!r} has no weight matrix")


def _toposort(g: ArchGraph) -> list[int]:
    indeg = {n.node_id: 0 for n in g.nodes}
    for _, dst, _ in g.edges:
        indeg[dst] += 1
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order: list[int] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        fresh = []
        for s, d, _ in g.edges:
            if s == v:
                indeg[d] -= 1
                if indeg[d] == 0:
                    fresh.append(d)
        ready = sorted(ready + fresh)
    if len(order) != len(g.nodes):
        raise ValueError("graph is cyclic")
    return order


@dataclass
class BoundModel:
    """Graph with parameter values materialized for repeated evaluation."""

    graph: ArchGraph
    dense: dict[int, np.ndarray]
    bias: dict[int, np.ndarray]
    curl: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    order: list[int]


def bind(g: ArchGraph, params: ParamSet) -> BoundModel:
    for node in g.nodes:
        for p in node.params:
            got = params.slots.get(p.slot_id)
            if got is None or got.shape != p.shape:
                raise ShapeMismatchError(
                    f"slot {p.slot_id} ({p.name}) expects shape {p.shape}, "
                    f"got {None if got is None else got.shape}"
                )
    dense: dict[int, np.ndarray] = {}
    bias: dict[int, np.ndarray] = {}
    curl: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
    for node in g.nodes:
        if node.kind in ("dense", "masked_dense", "shared_linear"):
            dense[node.node_id] = materialize_weight(node, params)
            if node.kind != "shared_linear":
                bias[node.node_id] = params.slots[node.slot("bias").slot_id]
        elif node.kind == "curl_head":
            curl[node.node_id] = (
                params.slots[node.slot("amplitude").slot_id],
                params.slots[node.slot("wx").slot_id],
                params.slots[node.slot("wy").slot_id],
                params.slots[node.slot("shift").slot_id],
            )
    return BoundModel(g, dense, bias, curl, _toposort(g))


def run(bound: BoundModel, x_batch: np.ndarray) -> np.ndarray:
    """Evaluate a batch (rows = samples) through the bound graph."""
    g = bound.graph
    values: dict[int, np.ndarray] = {}
    for nid in bound.order:
        node = g.node(nid)
        ins = [values[src] for src, _ in g.producers(nid)]
        if node.kind == "input":
            out = x_batch
        elif node.kind == "output":
            out = ins[0]
        elif node.kind in ("dense", "masked_dense"):
            out = ins[0] @ bound.dense[nid].T + bound.bias[nid]
        elif node.kind == "shared_linear":
            out = ins[0] @ bound.dense[nid].T
        elif node.kind == "pointwise":
            out = np.tanh(ins[0])
        elif node.kind == "projection":
            hy = ins[0]
            if node.input_matrix is not None:
                t = ins[1] @ node.input_matrix.T + node.offset
            else:
                t = np.broadcast_to(node.offset, (hy.shape[0], node.offset.shape[0]))
            out = hy + (t - hy @ node.matrix.T) @ node.correction.T
        elif node.kind == "curl_head":
            a, wx, wy, shift = bound.curl[nid]
            z = np.tanh(ins[0][:, :1] * wx + ins[0][:, 1:2] * wy + shift)
            s = 1.0 - z * z
            out = np.stack([s @ (a * wy), -(s @ (a * wx))], axis=1)
        elif node.kind == "concat":
            out = np.concatenate(ins, axis=1)
        else:
            raise ValueError(f"cannot evaluate node kind {node.kind!r}")
        if not np.isfinite(out).all():
            raise NonFiniteValueError(f"non-finite value at node {nid} ({node.kind})", nid)
        values[nid] = out
    return values[g.output_node.node_id]


def forward(g: ArchGraph, params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Evaluate one input vector (n,) or a batch (b, n)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != g.input_dim:
        raise ShapeMismatchError(f"input shape {x.shape} does not match input_dim {g.input_dim}")
    out = run(bind(g, params), batch)
    return out[0] if single else out


def jacobian_fd(
    g: ArchGraph, params: ParamSet, x: np.ndarray, h: float = 1e-4
) -> np.ndarray:
    """Central-difference Jacobian, shape (output_dim, input_dim)."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.input_dim,):
        raise ShapeMismatchError(f"input shape {x.shape} does not match input_dim {g.input_dim}")
    n = g.input_dim
    steps = np.eye(n) * h
    batch = np.concatenate([x + steps, x - steps], axis=0)
    outs = run(bind(g, params), batch)
    return (outs[:n] - outs[n:]).T / (2.0 * h)


def apply_perm(perm: tuple[int, ...], x: np.ndarray) -> np.ndarray:
    """Move coordinate i to position perm[i] (vector or batch)."""
    x = np.asarray(x)
    n = len(perm)
    if x.shape[-1] != n:
        raise ShapeMismatchError(f"permutation degree {n} != vector length {x.shape[-1]}")
    out = np.empty_like(x)
    idx = list(perm)
    if x.ndim == 1:
        out[idx] = x
    else:
        out[..., idx] = x
    return out

"""Adversarial graph mutations used to test certificate sensitivity.

Each mutation produces a structurally loadable graph that silently violates
one compiled constraint; certification must flip to a fail verdict on every
applicable mutant.  Returns None when a graph has no site for the mutation.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .archir import ArchGraph, LayerNode, ParamSlot


def _swap_node(g: ArchGraph, node: LayerNode) -> ArchGraph:
    nodes = tuple(node if n.node_id == node.node_id else n for n in g.nodes)
    return replace(g, nodes=nodes)


def unshare_slot(g: ArchGraph) -> ArchGraph | None:
    """Split one shared orbit into two independent parameters."""
    for node in g.nodes:
        if node.kind != "shared_linear":
            continue
        ids = node.slot_ids
        counts = np.bincount(ids[ids >= 0].reshape(-1))
        big = np.nonzero(counts >= 2)[0]
        if big.size == 0:
            continue
        target = int(big[0])
        new_ids = ids.copy()
        cells = np.argwhere(new_ids == target)
        r, c = cells[-1]
        fresh = int(ids.max()) + 1
        new_ids[r, c] = fresh
        slot = node.slot("orbit_weights")
        params = tuple(
            ParamSlot(p.slot_id, (fresh + 1,), p.name) if p.name == "orbit_weights" else p
            for p in node.params
        )
        return _swap_node(g, replace(node, slot_ids=new_ids, params=params))
    return None


def zero_projection_row(g: ArchGraph) -> ArchGraph | None:
    """Zero the first row of a projection's constraint matrix."""
    for node in g.nodes:
        if node.kind != "projection":
            continue
        matrix = node.matrix.copy()
        matrix[0, :] = 0.0
        return _swap_node(g, replace(node, matrix=matrix))
    return None


def flip_mask_bit(g: ArchGraph) -> ArchGraph | None:
    """Open one forbidden cell: a masked zero becomes free, or a structurally
    zero shared cell gets its own fresh parameter."""
    for node in g.nodes:
        if node.kind == "masked_dense":
            zeros = np.argwhere(node.mask == 0)
            if zeros.size == 0:
                continue
            mask = node.mask.copy()
            r, c = zeros[0]
            mask[r, c] = 1
            return _swap_node(g, replace(node, mask=mask))
        if node.kind == "shared_linear":
            zeros = np.argwhere(node.slot_ids < 0)
            if zeros.size == 0:
                continue
            ids = node.slot_ids.copy()
            r, c = zeros[0]
            fresh = int(ids.max()) + 1
            ids[r, c] = fresh
            params = tuple(
                ParamSlot(p.slot_id, (fresh + 1,), p.name) if p.name == "orbit_weights" else p
                for p in node.params
            )
            return _swap_node(g, replace(node, slot_ids=ids, params=params))
    return None


def replace_curl_head(g: ArchGraph) -> ArchGraph | None:
    """Swap the divergence-free head for an unconstrained affine layer."""
    for node in g.nodes:
        if node.kind != "curl_head":
            continue
        base = g.max_slot_id() + 1
        dense = LayerNode(
            node.node_id,
            "dense",
            node.width_in,
            node.width_out,
            (
                ParamSlot(base, (node.width_out, node.width_in), "weight"),
                ParamSlot(base + 1, (node.width_out,), "bias"),
            ),
        )
        return _swap_node(g, dense)
    return None


MUTATIONS = {
    "unshare_slot": unshare_slot,
    "zero_projection_row": zero_projection_row,
    "flip_mask_bit": flip_mask_bit,
    "replace_curl_head": replace_curl_head,
}

"""Standalone model export plus reference vectors.

The exported source depends only on numpy and reproduces the interpreter's
forward pass operation for operation, with all weights materialized as
literals (shortest round-trip floats), so both runtimes agree to rounding.
A metadata JSON block (masks, projection constants, sharing patterns, the
source archir sha) is embedded as a string constant for external harnesses.
"""

from __future__ import annotations

import json

import numpy as np

from . import rng
from .archir import ArchGraph
from .errors import UnsupportedTargetError
from .interp import ParamSet, bind, materialize_weight, run


def _vec_lit(arr: np.ndarray) -> str:
    return "[" + ", ".join(repr(float(v)) for v in np.asarray(arr, dtype=np.float64)) + "]"


def _lit(arr: np.ndarray) -> str:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        return f"np.array({_vec_lit(arr)})"
    rows = ",\n    ".join(_vec_lit(row) for row in arr)
    return f"np.array([\n    {rows}\n])"


def _meta_block(g: ArchGraph, sha: str) -> str:
    cons = None
    masks = []
    sharing = []
    for node in g.nodes:
        if node.kind == "projection":
            cons = {
                "matrix": node.matrix.tolist(),
                "input_matrix": None if node.input_matrix is None else node.input_matrix.tolist(),
                "offset": node.offset.tolist(),
                "correction": node.correction.tolist(),
            }
        elif node.kind == "masked_dense":
            masks.append(node.mask.tolist())
        elif node.kind == "shared_linear":
            sharing.append(node.slot_ids.tolist())
    meta = {
        "archir_sha256": sha,
        "theory": g.theory,
        "input_dim": g.input_dim,
        "output_dim": g.output_dim,
        "cons": cons,
        "masks": masks,
        "sharing": sharing,
    }
    return json.dumps(meta, indent=1)


def generate_model_source(g: ArchGraph, params: ParamSet, sha: str, target: str = "python") -> str:
    """Emit standalone model source implementing forward exactly."""
    if target != "python":
        raise UnsupportedTargetError(f"unsupported export target {target!r}")

    consts: list[str] = []
    body: list[str] = []
    names: dict[int, str] = {}

    order = bind(g, params).order
    for nid in order:
        node = g.node(nid)
        feeds = [names[src] for src, _ in g.producers(nid)]
        var = f"v{nid}"
        if node.kind == "input":
            names[nid] = "X"
            continue
        if node.kind == "output":
            names[nid] = feeds[0]
            continue
        if node.kind in ("dense", "masked_dense"):
            w = materialize_weight(node, params)
            b = params.slots[node.slot("bias").slot_id]
            consts.append(f"W{nid} = {_lit(w)}")
            consts.append(f"B{nid} = {_lit(b)}")
            body.append(f"    {var} = {feeds[0]} @ W{nid}.T + B{nid}")
        elif node.kind == "shared_linear":
            w = materialize_weight(node, params)
            consts.append(f"W{nid} = {_lit(w)}")
            body.append(f"    {var} = {feeds[0]} @ W{nid}.T")
        elif node.kind == "pointwise":
            body.append(f"    {var} = np.tanh({feeds[0]})")
        elif node.kind == "projection":
            consts.append(f"PA{nid} = {_lit(node.matrix)}")
            consts.append(f"PR{nid} = {_lit(node.correction)}")
            consts.append(f"PC{nid} = {_lit(node.offset)}")
            if node.input_matrix is not None:
                consts.append(f"PT{nid} = {_lit(node.input_matrix)}")
                body.append(f"    t{nid} = {feeds[1]} @ PT{nid}.T + PC{nid}")
            else:
                body.append(
                    f"    t{nid} = np.broadcast_to(PC{nid}, ({feeds[0]}.shape[0], PC{nid}.shape[0]))"
                )
            body.append(f"    {var} = {feeds[0]} + (t{nid} - {feeds[0]} @ PA{nid}.T) @ PR{nid}.T")
        elif node.kind == "curl_head":
            a = params.slots[node.slot("amplitude").slot_id]
            wx = params.slots[node.slot("wx").slot_id]
            wy = params.slots[node.slot("wy").slot_id]
            sh = params.slots[node.slot("shift").slot_id]
            consts.append(f"CA{nid} = {_lit(a)}")
            consts.append(f"CWX{nid} = {_lit(wx)}")
            consts.append(f"CWY{nid} = {_lit(wy)}")
            consts.append(f"CS{nid} = {_lit(sh)}")
            body.append(
                f"    z{nid} = np.tanh({feeds[0]}[:, :1] * CWX{nid} + "
                f"{feeds[0]}[:, 1:2] * CWY{nid} + CS{nid})"
            )
            body.append(f"    s{nid} = 1.0 - z{nid} * z{nid}")
            body.append(
                f"    {var} = np.stack([s{nid} @ (CA{nid} * CWY{nid}), "
                f"-(s{nid} @ (CA{nid} * CWX{nid}))], axis=1)"
            )
        elif node.kind == "concat":
            body.append(f"    {var} = np.concatenate([{', '.join(feeds)}], axis=1)")
        else:
            raise UnsupportedTargetError(f"cannot export node kind {node.kind!r}")
        names[nid] = var

    result = names[g.output_node.node_id]
    const_text = "\n".join(consts)
    body_text = "\n".join(body) if body else "    pass"
    return f'''"""Standalone model exported by theoryc; depends only on numpy."""

import json

import numpy as np

ARCHIR_SHA256 = "{sha}"
INPUT_DIM = {g.input_dim}
OUTPUT_DIM = {g.output_dim}

MODEL_META = r"""
{_meta_block(g, sha)}
"""

{const_text}


def forward(x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
{body_text}
    out = {result}
    return out[0] if single else out


def _main():
    import sys

    data = json.loads(sys.stdin.read())
    print(json.dumps(forward(np.asarray(data, dtype=np.float64)).tolist()))


if __name__ == "__main__":
    _main()
'''


def generate_refs(
    g: ArchGraph, params: ParamSet, seed: int, sha: str, count: int = 32
) -> dict:
    """Reference vectors: random inputs and their interpreter outputs."""
    x = rng.normal(rng.mix(seed, 0x2EF5), count * g.input_dim).reshape(count, g.input_dim)
    y = run(bind(g, params), x)
    return {
        "archir_sha256": sha,
        "seed": seed,
        "inputs": x.tolist(),
        "outputs": y.tolist(),
    }

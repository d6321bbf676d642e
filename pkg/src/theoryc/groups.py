"""Finite permutation groups in image notation.

A permutation on n points is a tuple p of length n with p[i] = image of i.
Acting on a vector moves coordinate i to position p[i] (y[p[i]] = x[i]), so
the matrix of p has P[p[i], i] = 1 and composition satisfies
P_{compose(p, q)} = P_p @ P_q.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import GroupOrderCapExceededError, NonBijectiveGeneratorError

Perm = tuple[int, ...]

DEFAULT_GROUP_CAP = 10_080


def identity(n: int) -> Perm:
    return tuple(range(n))


def is_bijection(p: tuple[int, ...], degree: int) -> bool:
    return len(p) == degree and sorted(p) == list(range(degree))


def compose(p: Perm, q: Perm) -> Perm:
    """p after q: i -> p[q[i]]."""
    return tuple(p[q[i]] for i in range(len(p)))


def inverse(p: Perm) -> Perm:
    inv = [0] * len(p)
    for i, j in enumerate(p):
        inv[j] = i
    return tuple(inv)


def perm_matrix(p: Perm) -> np.ndarray:
    n = len(p)
    mat = np.zeros((n, n), dtype=np.float64)
    mat[list(p), range(n)] = 1.0
    return mat


def enumerate_group(
    generators: list[Perm] | tuple[Perm, ...],
    degree: int,
    cap: int = DEFAULT_GROUP_CAP,
) -> list[Perm]:
    """Close the generators under composition.

    Returns the full group (identity included) sorted lexicographically on
    image tuples.  Inverses come for free: every generator has finite order.
    Raises GroupOrderCapExceededError as soon as the closure passes `cap`.
    """
    gens = [tuple(g) for g in generators]
    for g in gens:
        if not is_bijection(g, degree):
            raise NonBijectiveGeneratorError(f"perm{g} is not a bijection on 0..{degree - 1}")
    seen: set[Perm] = {identity(degree)}
    queue: deque[Perm] = deque(seen)
    while queue:
        cur = queue.popleft()
        for g in gens:
            nxt = compose(g, cur)
            if nxt not in seen:
                seen.add(nxt)
                if len(seen) > cap:
                    raise GroupOrderCapExceededError(
                        f"group order exceeds cap {cap} (degree {degree})"
                    )
                queue.append(nxt)
    return sorted(seen)


def blowup(p: Perm, channels: int) -> Perm:
    """Extend p to n*channels indices laid out as var-major blocks.

    Index (var i, channel c) sits at i * channels + c; channels ride along
    untouched, so the block permutation moves whole per-variable blocks.
    """
    out = [0] * (len(p) * channels)
    for i, j in enumerate(p):
        for c in range(channels):
            out[i * channels + c] = j * channels + c
    return tuple(out)


def pair_orbit_ids(
    row_perms: list[Perm],
    col_perms: list[Perm],
    allowed: np.ndarray | None = None,
) -> np.ndarray:
    """Partition (row, col) index pairs into joint orbits.

    row_perms[k] and col_perms[k] are the k-th generator's action on the two
    sides; cells (r, c) and (row_perms[k][r], col_perms[k][c]) share a value.
    Returns an int matrix of orbit indices numbered by first appearance in
    row-major order, with -1 on cells excluded by `allowed`.  Raises
    ValueError if an orbit straddles the allowed/excluded boundary (callers
    must check the action preserves the mask before merging).
    """
    n_rows = len(row_perms[0]) if row_perms else (allowed.shape[0] if allowed is not None else 0)
    n_cols = len(col_perms[0]) if col_perms else (allowed.shape[1] if allowed is not None else 0)
    if allowed is None:
        allowed = np.ones((n_rows, n_cols), dtype=bool)
    total = n_rows * n_cols
    parent = list(range(total))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    flat_allowed = allowed.reshape(-1)
    for rp, cp in zip(row_perms, col_perms):
        rp_arr = np.asarray(rp)
        cp_arr = np.asarray(cp)
        src = np.arange(total)
        dst = rp_arr[src // n_cols] * n_cols + cp_arr[src % n_cols]
        if not np.array_equal(flat_allowed[src], flat_allowed[dst]):
            raise ValueError("group action does not preserve the allowed-entry mask")
        for a, b in zip(src.tolist(), dst.tolist()):
            if flat_allowed[a]:
                union(a, b)

    ids = np.full(total, -1, dtype=np.int64)
    next_id = 0
    roots: dict[int, int] = {}
    for cell in range(total):
        if not flat_allowed[cell]:
            continue
        root = find(cell)
        if root not in roots:
            roots[root] = next_id
            next_id += 1
        ids[cell] = roots[root]
    return ids.reshape(n_rows, n_cols)

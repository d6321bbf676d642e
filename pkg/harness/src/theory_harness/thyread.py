"""Minimal theory-file reader: just the fields the recheck needs.

Understands the signature dimensions, Sym blocks (generators in image
notation plus the output action), and Cons blocks (matrix, mode, optional
input matrix or fixed target).  Matrix literals are bracket-scanned and
parsed as JSON arrays.
"""

from __future__ import annotations

import json
import re


def _strip_comments(text: str) -> str:
    return re.sub(r"#[^\n]*", "", text)


def _scan_bracketed(text: str, start: int) -> tuple[str, int]:
    """Return the balanced [...] literal starting at text[start]."""
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "[":
            depth += 1
        elif text[i] == "]":
            depth -= 1
            if depth == 0:
                return text[start : i + 1], i + 1
    raise ValueError("unbalanced bracket in theory file")


def _field_array(body: str, field: str):
    m = re.search(rf"{field}\s*:\s*\[", body)
    if m is None:
        return None
    literal, _ = _scan_bracketed(body, m.end() - 1)
    return json.loads(literal)


def read_theory(text: str) -> dict:
    """Extract dims, symmetry generators, and conservation systems."""
    text = _strip_comments(text)
    sig = re.search(r"signature\s*\{\s*input\s*:\s*(\d+)\s*;\s*output\s*:\s*(\d+)\s*;", text)
    if sig is None:
        raise ValueError("no signature block found")
    theory = {
        "input_dim": int(sig.group(1)),
        "output_dim": int(sig.group(2)),
        "syms": [],
        "cons": [],
    }

    for m in re.finditer(r"primitive\s+(\w+)\s*:\s*Sym\s*=\s*group\s*\{(.*?)\}", text, re.S):
        name, body = m.group(1), m.group(2)
        gens = [
            tuple(int(v) for v in g.split())
            for g in re.findall(r"perm\(([\d\s]*)\)", body)
        ]
        action = re.search(r"output_action\s*:\s*(\w+)", body)
        theory["syms"].append(
            {"name": name, "generators": gens, "output_action": action.group(1)}
        )

    for m in re.finditer(r"primitive\s+(\w+)\s*:\s*Cons\s*=\s*conserve\s*\{(.*?)\}", text, re.S):
        name, body = m.group(1), m.group(2)
        matrix = _field_array(body, "matrix")
        entry = {"name": name, "matrix": matrix, "input_matrix": None, "target": None}
        fix = re.search(r"mode\s*:\s*fix\s*\[", body)
        if fix is not None:
            literal, _ = _scan_bracketed(body, fix.end() - 1)
            entry["mode"] = "fix"
            entry["target"] = json.loads(literal)
        else:
            entry["mode"] = "preserve"
            entry["input_matrix"] = _field_array(body, "input_matrix")
        theory["cons"].append(entry)

    return theory

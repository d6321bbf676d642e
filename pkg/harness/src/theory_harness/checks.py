"""Reference replay and constraint rechecks against exported model sources."""

from __future__ import annotations

import importlib.util
import json
from pathlib import Path

import numpy as np

from .thyread import read_theory


class LoadError(Exception):
    """Model source missing, unimportable, or lacking the expected surface."""


class ShapeMismatch(Exception):
    """Vector lengths disagree with the model's declared dimensions."""


class ChecksumMismatch(Exception):
    """Reference vectors are bound to a different compiled artifact."""


_REQUIRED = ("forward", "ARCHIR_SHA256", "INPUT_DIM", "OUTPUT_DIM", "MODEL_META")


def load_model(path: str | Path):
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"model source not found: {path}")
    spec = importlib.util.spec_from_file_location(f"exported_{path.stem}", path)
    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except Exception as exc:  # noqa: BLE001 - exported code is external input
        raise LoadError(f"model source failed to import: {exc}") from exc
    for attr in _REQUIRED:
        if not hasattr(module, attr):
            raise LoadError(f"model source lacks {attr}")
    return module


def run_refs(model_path: str | Path, refs_path: str | Path, tol: float = 1e-9) -> dict:
    """Replay every reference case; passes iff max |diff| <= tol on all."""
    model = load_model(model_path)
    with open(refs_path, "r", encoding="utf-8") as fh:
        refs = json.load(fh)
    if refs.get("archir_sha256") != model.ARCHIR_SHA256:
        raise ChecksumMismatch(
            f"refs bound to {refs.get('archir_sha256')!r}, "
            f"model built from {model.ARCHIR_SHA256!r}"
        )
    cases = []
    worst = 0.0
    for i, (x, y) in enumerate(zip(refs["inputs"], refs["outputs"])):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != (model.INPUT_DIM,) or y.shape != (model.OUTPUT_DIM,):
            raise ShapeMismatch(f"case {i}: vector lengths do not match model dims")
        diff = float(np.max(np.abs(model.forward(x) - y)))
        worst = max(worst, diff)
        cases.append({"index": i, "max_abs_diff": diff, "passed": diff <= tol})
    return {
        "kind": "reference_replay",
        "archir_sha256": model.ARCHIR_SHA256,
        "cases": cases,
        "max_abs_diff": worst,
        "tol": tol,
        "passed": bool(cases) and all(c["passed"] for c in cases),
    }


def _permute(x: np.ndarray, perm) -> np.ndarray:
    out = np.empty_like(x)
    out[..., list(perm)] = x
    return out


def recheck_constraints(
    model_path: str | Path,
    theory_path: str | Path,
    n: int = 100,
    tol: float = 1e-9,
    seed: int = 0,
) -> dict:
    """Re-run symmetry/conservation residuals on fresh inputs in this runtime."""
    model = load_model(model_path)
    with open(theory_path, "r", encoding="utf-8") as fh:
        theory = read_theory(fh.read())
    if theory["input_dim"] != model.INPUT_DIM or theory["output_dim"] != model.OUTPUT_DIM:
        raise ShapeMismatch(
            f"theory is {theory['input_dim']}->{theory['output_dim']}, model is "
            f"{model.INPUT_DIM}->{model.OUTPUT_DIM}"
        )
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, theory["input_dim"]))
    y = model.forward(x)

    checks = []
    for sym in theory["syms"]:
        worst = 0.0
        for g in sym["generators"]:
            yg = model.forward(_permute(x, g))
            want = _permute(y, g) if sym["output_action"] == "same" else y
            worst = max(worst, float(np.max(np.abs(yg - want))))
        checks.append(
            {
                "primitive": sym["name"],
                "identity": "f(g x) == rho(g) f(x) per generator",
                "max_residual": worst,
                "passed": worst <= tol,
            }
        )
    for law in theory["cons"]:
        a = np.asarray(law["matrix"], dtype=np.float64)
        if law["mode"] == "fix":
            target = np.broadcast_to(np.asarray(law["target"]), (n, a.shape[0]))
        else:
            t = np.asarray(
                law["input_matrix"] if law["input_matrix"] is not None else law["matrix"],
                dtype=np.float64,
            )
            target = x @ t.T
        worst = float(np.max(np.abs(y @ a.T - target)))
        checks.append(
            {
                "primitive": law["name"],
                "identity": "A f(x) == t(x)",
                "max_residual": worst,
                "passed": worst <= tol,
            }
        )
    return {
        "kind": "constraint_recheck",
        "archir_sha256": model.ARCHIR_SHA256,
        "samples": n,
        "tol": tol,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }

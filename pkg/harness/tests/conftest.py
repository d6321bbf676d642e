"""Fixtures: build corpus artifacts through the compiler's public CLI only."""

import subprocess
import sys
from pathlib import Path

import pytest

CORPUS = Path(__file__).resolve().parents[2] / "corpus"
CORPUS_NAMES = ["dee", "c4", "s3", "divfree", "empty"]


def theoryc(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "theoryc", *args], capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """model.py + refs.json + theory path per corpus theory, exported at seed 0."""
    root = tmp_path_factory.mktemp("artifacts")
    built = {}
    for name in CORPUS_NAMES:
        theory = CORPUS / f"{name}.thy"
        archir = root / f"{name}.archir"
        model = root / f"{name}_model.py"
        refs = root / f"{name}_refs.json"
        theoryc("compile", str(theory), "-o", str(archir), "--width", "8")
        theoryc("export", str(archir), "-o", str(model), "--refs", str(refs), "--seed", "0")
        built[name] = {"theory": theory, "archir": archir, "model": model, "refs": refs}
    return built


@pytest.fixture(scope="session")
def reseeded_refs(artifacts, tmp_path_factory):
    """refs for the same dee artifact exported under a different seed."""
    root = tmp_path_factory.mktemp("reseeded")
    model = root / "dee_model7.py"
    refs = root / "dee_refs7.json"
    theoryc("export", str(artifacts["dee"]["archir"]), "-o", str(model),
            "--refs", str(refs), "--seed", "7")
    return {"model": model, "refs": refs}

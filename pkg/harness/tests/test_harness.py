"""Harness behavior: replay, rechecks, tamper detection, CLI contract."""

import json
import re
import subprocess
import sys

import numpy as np
import pytest

from theory_harness import (
    ChecksumMismatch,
    read_theory,
    recheck_constraints,
    run_refs,
)
from theory_harness.checks import LoadError, load_model


def test_run_refs_dee_agrees(artifacts):
    report = run_refs(artifacts["dee"]["model"], artifacts["dee"]["refs"])
    assert report["passed"]
    assert report["max_abs_diff"] <= 1e-9
    assert len(report["cases"]) == 32


def test_refs_from_other_seed_disagree(artifacts, reseeded_refs):
    # same compiled artifact, different parameter seed: checksum matches but
    # the replay must blow the tolerance
    report = run_refs(artifacts["dee"]["model"], reseeded_refs["refs"])
    assert not report["passed"]
    assert report["max_abs_diff"] > 1e-9


def test_refs_from_other_model_checksum_mismatch(artifacts):
    with pytest.raises(ChecksumMismatch):
        run_refs(artifacts["dee"]["model"], artifacts["c4"]["refs"])


def test_missing_model_is_load_error(tmp_path, artifacts):
    with pytest.raises(LoadError):
        run_refs(tmp_path / "ghost.py", artifacts["dee"]["refs"])


def test_broken_model_source_is_load_error(tmp_path, artifacts):
    bad = tmp_path / "broken.py"
    bad.write_text("def forward(x):\n    return undefined_name\n")
    with pytest.raises(LoadError):
        run_refs(bad, artifacts["dee"]["refs"])


def test_recheck_dee_constraints(artifacts):
    report = recheck_constraints(artifacts["dee"]["model"], artifacts["dee"]["theory"], n=100)
    assert report["passed"]
    assert {c["primitive"] for c in report["checks"]} == {"K", "C"}
    assert all(c["max_residual"] <= 1e-9 for c in report["checks"])


def test_recheck_empty_theory_vacuous(artifacts):
    report = recheck_constraints(artifacts["empty"]["model"], artifacts["empty"]["theory"])
    assert report["passed"] and report["checks"] == []


def test_recheck_detects_broken_weight_tie(artifacts, tmp_path):
    source = artifacts["c4"]["model"].read_text()
    # nudge the first materialized weight entry: breaks the orbit tying
    m = re.search(r"(W\d+ = np\.array\(\[\n    \[)(-?\d+\.\d+(?:e-?\d+)?)", source)
    assert m, "unexpected export format"
    broken = source[: m.start(2)] + repr(float(m.group(2)) + 0.25) + source[m.end(2) :]
    tampered = tmp_path / "tampered.py"
    tampered.write_text(broken)
    report = recheck_constraints(tampered, artifacts["c4"]["theory"])
    assert not report["passed"]
    sym = next(c for c in report["checks"] if c["identity"].startswith("f(g x)"))
    assert sym["max_residual"] > 1e-9


def test_zero_input_zero_bias_model_is_exact(tmp_path, artifacts):
    # strip the bias constants of the empty-theory model: tanh(W 0 + 0) = 0
    source = artifacts["empty"]["model"].read_text()

    def zero_literal(m):
        count = m.group(2).count(",") + 1
        return m.group(1) + "[" + ", ".join(["0.0"] * count) + "])"

    source = re.sub(r"(B\d+ = np\.array\()\[([^\]]*)\]\)", zero_literal, source)
    zeroed = tmp_path / "zerob.py"
    zeroed.write_text(source)
    model = load_model(zeroed)
    out = model.forward(np.zeros(model.INPUT_DIM))
    assert np.array_equal(out, np.zeros(model.OUTPUT_DIM))


def test_minimal_reader_parses_dee(artifacts):
    theory = read_theory(artifacts["dee"]["theory"].read_text())
    assert theory["input_dim"] == 12 and theory["output_dim"] == 12
    assert theory["syms"][0]["generators"] == [(3, 4, 5, 0, 1, 2, 6, 7, 8, 9, 10, 11)]
    assert theory["cons"][0]["mode"] == "preserve"
    assert theory["cons"][0]["matrix"] == [[1.0] * 12]


def test_cli_run_and_recheck(artifacts):
    proc = subprocess.run(
        [sys.executable, "-m", "theory_harness", "run",
         "--model", str(artifacts["dee"]["model"]), "--refs", str(artifacts["dee"]["refs"])],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["passed"] is True

    proc = subprocess.run(
        [sys.executable, "-m", "theory_harness", "recheck",
         "--model", str(artifacts["dee"]["model"]), "--theory", str(artifacts["dee"]["theory"])],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr


def test_cli_failure_exit_code(artifacts, reseeded_refs):
    proc = subprocess.run(
        [sys.executable, "-m", "theory_harness", "run",
         "--model", str(artifacts["dee"]["model"]), "--refs", str(reseeded_refs["refs"])],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 1
    assert json.loads(proc.stdout)["passed"] is False

"""Secondary acceptance: cross-runtime agreement for every corpus model."""

from conftest import CORPUS_NAMES
from theory_harness import recheck_constraints, run_refs


def test_cross_runtime_agreement(artifacts):
    """Replay 32 reference cases per corpus model and re-check constraints."""
    worst_replay = 0.0
    worst_recheck = 0.0
    for name in CORPUS_NAMES:
        art = artifacts[name]
        replay = run_refs(art["model"], art["refs"], tol=1e-9)
        assert replay["passed"], f"{name}: replay diff {replay['max_abs_diff']:.3e}"
        assert len(replay["cases"]) == 32
        worst_replay = max(worst_replay, replay["max_abs_diff"])

        recheck = recheck_constraints(art["model"], art["theory"], n=100, tol=1e-9)
        assert recheck["passed"], f"{name}: recheck {recheck['checks']}"
        for check in recheck["checks"]:
            worst_recheck = max(worst_recheck, check["max_residual"])
    print(
        f"ACCEPTANCE cross-runtime-agreement: PASS "
        f"(5 models, replay<={worst_replay:.2e}, recheck<={worst_recheck:.2e})"
    )

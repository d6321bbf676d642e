"""Certificate content, completeness oracle agreement, functoriality, mutations."""

import pytest

import gen
from theoryc.archir import from_json, to_json
from theoryc.certify import (
    certificate_json,
    certify_completeness_linear,
    certify_soundness,
    check_functoriality,
    full_certificate,
)
from theoryc.errors import MissingWitnessError, ProvenanceMismatchError
from theoryc.lang import (
    CausalGraph,
    ConservationLaw,
    Primitive,
    Signature,
    SymmetryGroup,
    TheorySpec,
    parse_theory,
    restrict,
)
from theoryc.mutate import MUTATIONS, unshare_slot
from theoryc.synth import SynthConfig, compile_theory
from theoryc.typecheck import check_wellformed

CFG = SynthConfig(hidden_width=8, depth=2)
FAST = dict(n_params=8, n_inputs=8)


def _typed(name):
    return check_wellformed(parse_theory(gen.load_corpus(name)))


def test_empty_theory_certificate_vacuous_pass():
    typed = _typed("empty")
    cert = full_certificate(compile_theory(typed, CFG), typed, **FAST)
    assert cert.claims == ()
    assert cert.verdict == "pass"


def test_c4_certificate_passes_with_tight_residuals():
    typed = _typed("c4")
    cert = full_certificate(compile_theory(typed, CFG), typed, **FAST)
    assert cert.verdict == "pass"
    numeric = [c for c in cert.claims if c.kind == "numeric_residual"]
    assert all(c.max_residual <= 1e-9 for c in numeric)
    comp = [c for c in cert.claims if c.kind == "completeness_dim"]
    assert comp[0].orbit_count == comp[0].commutant_dim == 4


def test_certificate_records_sampling_and_tolerances():
    typed = _typed("c4")
    cert = certify_soundness(compile_theory(typed, CFG), typed, **FAST)
    doc = certificate_json(cert)
    assert '"sampled' in doc
    assert cert.tolerances == {"exact": 1e-9, "fd": 1e-5, "fd_step": 1e-4}
    assert cert.sample_counts == {"param_draws": 8, "inputs_per_draw": 8}


def test_certificate_byte_deterministic():
    typed = _typed("dee")
    g = compile_theory(typed, CFG)
    a = certificate_json(full_certificate(g, typed, **FAST))
    b = certificate_json(full_certificate(g, typed, **FAST))
    assert a == b


def test_unshared_slot_fails_symbolic_claim():
    typed = _typed("c4")
    g = compile_theory(typed, CFG)
    mutant = unshare_slot(g)
    cert = full_certificate(mutant, typed, **FAST)
    assert cert.verdict == "fail"
    sym = next(c for c in cert.claims if c.kind == "symbolic_rule")
    assert not sym.passed
    numeric = next(c for c in cert.claims if c.kind == "numeric_residual")
    assert not numeric.passed  # two values on one orbit also break equivariance


def test_mutations_survive_serialization_and_fail():
    typed = _typed("dee")
    g = compile_theory(typed, CFG)
    for name, fn in MUTATIONS.items():
        mutant = fn(g)
        if mutant is None:
            continue
        reloaded = from_json(to_json(mutant))
        cert = full_certificate(reloaded, typed, **FAST)
        assert cert.verdict == "fail", name


def test_certify_against_wrong_theory_is_provenance_mismatch():
    g = compile_theory(_typed("c4"), CFG)
    with pytest.raises(ProvenanceMismatchError):
        certify_soundness(g, _typed("s3"), **FAST)


def test_completeness_trivial_group():
    claim = certify_completeness_linear(SymmetryGroup(3, (), "same"))
    assert (claim.orbit_count, claim.commutant_dim) == (9, 9)
    assert claim.passed


@pytest.mark.parametrize(
    "gens,degree,expected",
    [
        (((1, 0, 2), (1, 2, 0)), 3, 2),  # S3
        (((1, 2, 3, 0),), 4, 4),  # C4
        (((1, 2, 3, 0), (3, 2, 1, 0)), 4, 3),  # D4
    ],
)
def test_completeness_matches_exact_commutant(gens, degree, expected):
    claim = certify_completeness_linear(SymmetryGroup(degree, gens, "same"))
    assert claim.passed
    assert claim.orbit_count == expected
    table = sorted(gen.group_closure_pairwise(gens, degree))
    assert claim.commutant_dim == gen.commutant_dim_exact(table, degree)
    assert claim.orbit_count == gen.burnside_pair_orbit_count(table, degree)


def test_completeness_rejects_large_degree():
    from theoryc.errors import GroupOrderCapExceededError

    with pytest.raises(GroupOrderCapExceededError):
        certify_completeness_linear(SymmetryGroup(13, (), "same"))


def test_unverified_completeness_notes_present():
    typed = _typed("divfree")
    cert = full_certificate(compile_theory(typed, CFG), typed, **FAST)
    assert any("completeness unverified" in n for n in cert.completeness_notes)
    assert cert.verdict == "pass"


def _dee_piece(piece):
    spec = parse_theory(gen.load_corpus("dee"))
    return check_wellformed(restrict(spec, [piece], f"dee_{piece}"))


def test_functoriality_dee_pairs_pass():
    for a, b in [("K", "C"), ("K", "G"), ("C", "G")]:
        claim = check_functoriality(_dee_piece(a), _dee_piece(b), CFG)
        assert claim.passed, (a, b)
        assert claim.max_residual <= 1e-12


def test_functoriality_with_empty_theory_is_exact():
    t = _typed("c4")
    empty4 = check_wellformed(TheorySpec("vac", Signature(4, 4), ()))
    claim = check_functoriality(t, empty4, CFG)
    assert claim.passed
    assert claim.max_residual == 0.0


def test_functoriality_rejects_unwitnessable_pair():
    shift = TheorySpec(
        "c4s", Signature(4, 4), (Primitive("R", "Sym", SymmetryGroup(4, ((1, 2, 3, 0),), "same")),)
    )
    chain = TheorySpec(
        "chain4", Signature(4, 4), (Primitive("G", "Caus", CausalGraph(4, ((0, 1), (1, 2), (2, 3)))),)
    )
    with pytest.raises(MissingWitnessError):
        check_functoriality(check_wellformed(shift), check_wellformed(chain), CFG)


def test_functoriality_rejects_incompatible_conservation():
    c3 = TheorySpec(
        "c3s", Signature(3, 3), (Primitive("R", "Sym", SymmetryGroup(3, ((1, 2, 0),), "same")),)
    )
    axis = TheorySpec(
        "axis",
        Signature(3, 3),
        (Primitive("C", "Cons", ConservationLaw(((1.0, 0.0, 0.0),), "preserve")),),
    )
    with pytest.raises(MissingWitnessError):
        check_functoriality(check_wellformed(c3), check_wellformed(axis), CFG)

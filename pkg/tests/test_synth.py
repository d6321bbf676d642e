"""Synthesis rules, whole-theory compilation, and graph composition tests."""

import numpy as np
import pytest

import gen
from theoryc import rng
from theoryc.archir import to_json, validate_graph
from theoryc.errors import MissingWitnessError, UnsupportedPairError
from theoryc.groups import enumerate_group, perm_matrix
from theoryc.interp import ParamSet, forward, init_params, jacobian_fd, materialize_weight
from theoryc.lang import (
    CausalGraph,
    ConservationLaw,
    DiffConstraint,
    Primitive,
    Relation,
    Signature,
    SymmetryGroup,
    TheorySpec,
    conjoin,
    parse_theory,
    restrict,
)
from theoryc.synth import (
    SynthConfig,
    compile_theory,
    compose,
    identity_graph,
    rule_caus,
    rule_cons,
    rule_diff,
    rule_sym,
)
from theoryc.typecheck import check_wellformed, reflexive_transitive_closure

CFG = SynthConfig(hidden_width=8, depth=2)


def _typed(spec):
    return check_wellformed(spec)


def _corpus_typed(name):
    return _typed(parse_theory(gen.load_corpus(name)))


# --- rule_sym -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "group,expected_slots",
    [
        (SymmetryGroup(3, (), "same"), 9),  # trivial group: ordinary dense layer
        (SymmetryGroup(3, ((1, 0, 2), (1, 2, 0)), "same"), 2),  # a*I + b*(J - I)
        (SymmetryGroup(4, ((1, 2, 3, 0),), "same"), 4),  # circulant family
    ],
)
def test_rule_sym_slot_counts(group, expected_slots):
    node = rule_sym(group, group.degree, group.degree)
    assert node.slot("orbit_weights").shape == (expected_slots,)


@pytest.mark.parametrize(
    "group",
    [
        SymmetryGroup(3, (), "same"),
        SymmetryGroup(3, ((1, 0, 2), (1, 2, 0)), "same"),
        SymmetryGroup(4, ((1, 2, 3, 0),), "same"),
        SymmetryGroup(4, ((1, 2, 3, 0), (3, 2, 1, 0)), "same"),  # dihedral
    ],
)
def test_rule_sym_slots_match_commutant_oracles(group):
    node = rule_sym(group, group.degree, group.degree)
    slots = node.slot("orbit_weights").shape[0]
    table = enumerate_group(group.generators, group.degree)
    assert slots == gen.burnside_pair_orbit_count(table, group.degree)
    # full-table float rank oracle
    n = group.degree
    eye = np.eye(n)
    rows = np.concatenate(
        [np.kron(perm_matrix(g), eye) - np.kron(eye, perm_matrix(g).T) for g in table]
    )
    s = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
    assert slots == n * n - rank


def test_rule_sym_s3_realizes_two_parameter_family():
    group = SymmetryGroup(3, ((1, 0, 2), (1, 2, 0)), "same")
    node = rule_sym(group, 3, 3)
    w = materialize_weight(node, ParamSet({0: np.array([2.0, -0.5])}))
    a, b = (2.0, -0.5) if w[0, 0] == 2.0 else (-0.5, 2.0)
    assert np.array_equal(w, a * np.eye(3) + b * (np.ones((3, 3)) - np.eye(3)))


def test_rule_sym_materialized_weight_commutes_exactly():
    group = SymmetryGroup(4, ((1, 2, 3, 0),), "same")
    node = rule_sym(group, 4, 4)
    w = materialize_weight(node, ParamSet({0: rng.normal(rng.mix(1), 4)}))
    for g in enumerate_group(group.generators, 4):
        p = perm_matrix(g)
        assert np.array_equal(p @ w, w @ p)


def test_rule_sym_invariant_ties_columns():
    group = SymmetryGroup(3, ((1, 2, 0),), "invariant")
    node = rule_sym(group, 3, 2)
    ids = node.slot_ids
    # one slot per row: all columns in a C3 orbit are tied
    assert node.slot("orbit_weights").shape == (2,)
    assert (ids == ids[:, :1]).all()


# --- rule_cons ----------------------------------------------------------------------


def test_rule_cons_orthogonal_correction():
    law = ConservationLaw(((1.0, 1.0, 1.0),), "preserve")
    node = rule_cons(law, 3)
    assert np.allclose(node.correction, np.full((3, 1), 1.0 / 3.0))
    t = node.input_matrix @ np.array([1.0, 2.0, 3.0]) + node.offset
    y = np.zeros(3) + node.correction @ (t - np.zeros(1))
    assert np.allclose(y, [2.0, 2.0, 2.0])


def test_rule_cons_fix_identity_pins_output():
    law = ConservationLaw(((1.0, 0.0), (0.0, 1.0)), "fix", target=(0.0, 0.0))
    spec = TheorySpec("p", Signature(2, 2), (Primitive("C", "Cons", law),))
    g = compile_theory(_typed(spec), CFG)
    p = init_params(g, 3)
    for trial in range(5):
        x = rng.normal(rng.mix(40, trial), 2)
        assert np.max(np.abs(forward(g, p, x))) < 1e-12


def test_rule_cons_matches_least_norm_oracle_on_random_cases():
    for trial in range(20):
        k, m = 2, 5
        a = rng.normal(rng.mix(50, trial), k * m).reshape(k, m) + np.eye(k, m) * 3
        law = ConservationLaw(tuple(map(tuple, a)), "fix", target=tuple(rng.normal(rng.mix(51, trial), k)))
        node = rule_cons(law, m)
        y_hat = rng.normal(rng.mix(52, trial), m)
        got = y_hat + node.correction @ (node.offset - a @ y_hat)
        oracle = gen.least_norm_feasible(y_hat, a, np.asarray(law.target))
        assert np.max(np.abs(got - oracle)) < 1e-9


# --- rule_caus ----------------------------------------------------------------------


def test_rule_caus_chain_forbidden_entries():
    dag = CausalGraph(3, ((0, 1), (1, 2)))
    spec = TheorySpec("ch", Signature(3, 3), (Primitive("G", "Caus", dag),))
    g = compile_theory(_typed(spec), CFG)
    closure = reflexive_transitive_closure(dag)
    assert [(j, i) for j in range(3) for i in range(3) if closure[j, i] == 0] == [
        (0, 1),
        (0, 2),
        (1, 2),
    ]
    p = init_params(g, 2)
    jac = jacobian_fd(g, p, rng.normal(rng.mix(7), 3), 1e-4)
    assert np.max(np.abs(jac[closure == 0])) <= 1e-7
    assert np.max(np.abs(jac[closure == 1])) > 1e-4


def test_rule_caus_edgeless_gives_independent_scalars():
    dag = CausalGraph(3, ())
    spec = TheorySpec("ind", Signature(3, 3), (Primitive("G", "Caus", dag),))
    g = compile_theory(_typed(spec), CFG)
    p = init_params(g, 4)
    jac = jacobian_fd(g, p, rng.normal(rng.mix(8), 3), 1e-4)
    off = ~np.eye(3, dtype=bool)
    assert np.max(np.abs(jac[off])) <= 1e-7


def test_rule_caus_random_dag_masks_match_closure_oracle():
    import random

    r = random.Random(6)
    edges = tuple((a, b) for a in range(6) for b in range(a + 1, 6) if r.random() < 0.4)
    dag = CausalGraph(6, edges)
    nodes = rule_caus(dag, CFG)
    closure = gen.closure_floyd_warshall(6, edges)
    first = nodes[0]
    h = first.width_out // 6
    assert np.array_equal(first.mask, np.repeat(closure, h, axis=0))
    spec = TheorySpec("rd", Signature(6, 6), (Primitive("G", "Caus", dag),))
    g = compile_theory(_typed(spec), CFG)
    p = init_params(g, 5)
    for trial in range(3):
        jac = jacobian_fd(g, p, rng.normal(rng.mix(9, trial), 6), 1e-4)
        assert np.max(np.abs(jac[closure == 0])) <= 1e-7


# --- rule_diff ----------------------------------------------------------------------


def test_rule_diff_divergence_under_1e5_on_1000_points():
    spec = parse_theory(gen.load_corpus("divfree"))
    g = compile_theory(_typed(spec), SynthConfig(hidden_width=16))
    worst = 0.0
    h = 1e-4
    for draw in range(5):
        p = init_params(g, rng.mix(13, draw))
        pts = rng.normal(rng.mix(14, draw), 2 * 200).reshape(200, 2)
        for x in pts:
            ex = np.array([h, 0.0])
            ey = np.array([0.0, h])
            du = (forward(g, p, x + ex)[0] - forward(g, p, x - ex)[0]) / (2 * h)
            dv = (forward(g, p, x + ey)[1] - forward(g, p, x - ey)[1]) / (2 * h)
            worst = max(worst, abs(du + dv))
    assert worst <= 1e-5


def test_rule_diff_node_shape():
    node = rule_diff(DiffConstraint(), SynthConfig(hidden_width=7))
    assert node.kind == "curl_head" and node.features == 7
    assert [p.shape for p in node.params] == [(7,)] * 4


# --- compile ------------------------------------------------------------------------


def test_compile_empty_theory_is_plain_mlp():
    g = compile_theory(_corpus_typed("empty"), CFG)
    assert [n.kind for n in g.nodes] == ["input", "dense", "pointwise", "dense", "output"]
    assert g.provenance == {}


def test_compile_c4_blocked_slot_counts():
    g = compile_theory(_corpus_typed("c4"), CFG)
    shared = [n for n in g.nodes if n.kind == "shared_linear"]
    h = CFG.hidden_width
    # every 4x4 coordinate block carries exactly 4 slots
    assert shared[0].slot("orbit_weights").shape == (4 * h,)
    assert shared[-1].slot("orbit_weights").shape == (4 * h,)


def test_compile_dee_merges_tying_mask_and_projection():
    typed = _corpus_typed("dee")
    g = compile_theory(typed, CFG)
    kinds = [n.kind for n in g.nodes]
    assert kinds == ["input", "shared_linear", "pointwise", "shared_linear", "projection", "output"]
    core = g.nodes[1]
    assert (core.slot_ids < 0).any()  # causal mask holes survive inside the tying
    proj = g.nodes[4]
    assert np.array_equal(proj.correction[:, 0], np.eye(12)[11])  # routed into the sink
    prov_names = {name for v in g.provenance.values() for name, _ in v}
    assert prov_names == {"G", "C", "K"}


def test_compile_deterministic_bytes():
    typed = _corpus_typed("dee")
    assert to_json(compile_theory(typed, CFG)) == to_json(compile_theory(typed, CFG))


def test_compile_rejects_divfree_with_conservation():
    prims = (
        Primitive("D", "Diff", DiffConstraint()),
        Primitive("C", "Cons", ConservationLaw(((1.0, 0.0),), "fix", target=(0.0,))),
    )
    typed = _typed(TheorySpec("dx", Signature(2, 2), prims))
    with pytest.raises(UnsupportedPairError):
        compile_theory(typed, CFG)


def test_compile_rejects_mixed_output_actions():
    prims = (
        Primitive("A", "Sym", SymmetryGroup(3, ((1, 0, 2),), "same")),
        Primitive("B", "Sym", SymmetryGroup(3, ((1, 2, 0),), "invariant")),
    )
    typed = _typed(TheorySpec("mx", Signature(3, 3), prims))
    with pytest.raises(UnsupportedPairError):
        compile_theory(typed, CFG)


def test_compile_rejects_unpreserved_mask_even_without_relation():
    prims = (
        Primitive("R", "Sym", SymmetryGroup(4, ((1, 2, 3, 0),), "same")),
        Primitive("G", "Caus", CausalGraph(4, ((0, 1), (1, 2), (2, 3)))),
    )
    typed = _typed(TheorySpec("uc", Signature(4, 4), prims))  # no relation declared
    with pytest.raises(UnsupportedPairError):
        compile_theory(typed, CFG)


def test_compile_routes_conservation_into_mask_safe_sink():
    # chain 0 -> 1 with a sum row: variable 1 descends from both, absorbs it
    prims = (
        Primitive("G", "Caus", CausalGraph(2, ((0, 1),))),
        Primitive("C", "Cons", ConservationLaw(((1.0, 1.0),), "preserve")),
    )
    typed = _typed(TheorySpec("nr", Signature(2, 2), prims))
    g = compile_theory(typed, CFG)
    assert np.array_equal(g.nodes[-2].correction[:, 0], np.array([0.0, 1.0]))
    closure = reflexive_transitive_closure(prims[0].payload)
    p = init_params(g, 3)
    jac = jacobian_fd(g, p, rng.normal(rng.mix(26), 2), 1e-4)
    assert np.max(np.abs(jac[closure == 0])) <= 1e-7


def test_compile_rejects_unroutable_conservation_over_mask():
    # a row over two parallel siblings has no common mask-safe correction variable
    prims_bad = (
        Primitive("G", "Caus", CausalGraph(3, ((0, 1), (0, 2)))),
        Primitive("C", "Cons", ConservationLaw(((0.0, 1.0, 1.0),), "preserve")),
    )
    typed_bad = _typed(TheorySpec("nr2", Signature(3, 3), prims_bad))
    with pytest.raises(UnsupportedPairError):
        compile_theory(typed_bad, CFG)


# --- compose ------------------------------------------------------------------------


def _dee_split(piece):
    spec = parse_theory(gen.load_corpus("dee"))
    return _typed(restrict(spec, [piece], f"dee_{piece}"))


def test_compose_with_identity_graph_preserves_structure():
    g = compile_theory(_corpus_typed("c4"), CFG)
    merged = compose(g, identity_graph(4))
    assert [n.kind for n in merged.nodes] == [n.kind for n in g.nodes]
    p = init_params(g, 3)
    x = rng.normal(rng.mix(21), 4)
    assert np.array_equal(forward(merged, p, x), forward(g, p, x))


def test_compose_matches_joint_compilation_functionally():
    tk, tc = _dee_split("K"), _dee_split("C")
    conj = _typed(conjoin(tk.spec, tc.spec))
    joint = compile_theory(conj, CFG)
    witness = list(conj.compat_witnesses.values())
    merged = compose(compile_theory(tk, CFG), compile_theory(tc, CFG), witness)
    assert validate_graph(merged) == []
    for trial in range(100):
        p = init_params(joint, rng.mix(22, trial))
        x = rng.normal(rng.mix(23, trial), 12)
        assert np.array_equal(forward(joint, p, x), forward(merged, p, x))


def test_compose_requires_witness_for_projection_on_tied_core():
    tk, tc = _dee_split("K"), _dee_split("C")
    with pytest.raises(MissingWitnessError):
        compose(compile_theory(tk, CFG), compile_theory(tc, CFG), None)


def test_compose_projection_only_graphs_stacks_rows():
    def proj_theory(name, row, target):
        law = ConservationLaw((row,), "fix", target=(target,))
        return _typed(TheorySpec(name, Signature(3, 3), (Primitive("C", "Cons", law),)))

    cfg = SynthConfig(hidden_width=4, depth=1)
    g1 = compile_theory(proj_theory("p1", (1.0, 1.0, 0.0), 1.0), cfg)
    g2 = compile_theory(proj_theory("p2", (0.0, 0.0, 2.0), 4.0), cfg)
    merged = compose(g1, g2)
    projections = [n for n in merged.nodes if n.kind == "projection"]
    assert len(projections) == 1
    assert projections[0].matrix.shape == (2, 3)
    # function equals the stacked least-norm projection of the merged core output
    p = init_params(merged, 1)
    x = rng.normal(rng.mix(24), 3)
    got = forward(merged, p, x)
    a = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
    assert np.max(np.abs(a @ got - np.array([1.0, 4.0]))) < 1e-9


def test_compose_dimension_mismatch():
    from theoryc.errors import DimensionMismatchError

    g1 = compile_theory(_corpus_typed("c4"), CFG)
    g2 = compile_theory(_corpus_typed("s3"), CFG)
    with pytest.raises(DimensionMismatchError):
        compose(g1, g2)


def test_compose_curl_with_free_model():
    gd = compile_theory(_corpus_typed("divfree"), CFG)
    ge = compile_theory(
        _typed(TheorySpec("free2", Signature(2, 2), ())), CFG
    )
    merged = compose(gd, ge)
    assert any(n.kind == "curl_head" for n in merged.nodes)
    p = init_params(gd, 6)
    x = rng.normal(rng.mix(25), 2)
    assert np.array_equal(forward(merged, p, x), forward(gd, p, x))


def test_invariant_symmetry_with_conservation():
    # invariant readout plus a projection whose input side is itself invariant
    prims = (
        Primitive("R", "Sym", SymmetryGroup(3, ((1, 2, 0),), "invariant")),
        Primitive(
            "C",
            "Cons",
            ConservationLaw(
                ((1.0, 0.0), (0.0, 1.0)),
                "preserve",
                input_matrix=((1.0, 1.0, 1.0), (0.0, 0.0, 0.0)),
            ),
        ),
    )
    spec = TheorySpec("invc", Signature(3, 2), prims, (Relation("compatible", ("R", "C")),))
    typed = _typed(spec)
    g = compile_theory(typed, CFG)
    assert validate_graph(g) == []
    p = init_params(g, 4)
    x = rng.normal(rng.mix(27), 3)
    y = forward(g, p, x)
    for perm in [(1, 2, 0), (2, 0, 1)]:
        xg = np.empty(3)
        xg[list(perm)] = x
        assert np.max(np.abs(forward(g, p, xg) - y)) < 1e-12
    assert abs(y[0] - x.sum()) < 1e-12  # first row pins f_0 to the invariant sum
    assert abs(y[1]) < 1e-12  # second row pins f_1 to zero


def test_invariant_symmetry_rejects_non_invariant_target():
    prims = (
        Primitive("R", "Sym", SymmetryGroup(3, ((1, 2, 0),), "invariant")),
        Primitive(
            "C",
            "Cons",
            ConservationLaw(((1.0, 0.0),), "preserve", input_matrix=((1.0, 0.0, 0.0),)),
        ),
    )
    spec = TheorySpec("invbad", Signature(3, 2), prims)
    typed = _typed(spec)
    with pytest.raises(UnsupportedPairError):
        compile_theory(typed, CFG)


def test_compose_curl_with_structural_model_refused():
    gd = compile_theory(_corpus_typed("divfree"), CFG)
    prims = (Primitive("G", "Caus", CausalGraph(2, ((0, 1),))),)
    gc = compile_theory(_typed(TheorySpec("m2", Signature(2, 2), prims)), CFG)
    with pytest.raises(UnsupportedPairError):
        compose(gd, gc)

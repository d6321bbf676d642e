"""Interpreter tests: init determinism, forward math, FD Jacobians, actions."""

import numpy as np
import pytest

import gen
from theoryc import rng
from theoryc.errors import NonFiniteValueError, ShapeMismatchError
from theoryc.interp import (
    ParamSet,
    apply_perm,
    forward,
    init_params,
    jacobian_fd,
    slot_values,
)
from theoryc.lang import Signature, TheorySpec, parse_theory
from theoryc.synth import SynthConfig, compile_theory
from theoryc.typecheck import check_wellformed


def _empty(n, m, depth=2, width=8):
    spec = TheorySpec("e", Signature(n, m), ())
    return compile_theory(check_wellformed(spec), SynthConfig(hidden_width=width, depth=depth))


def _divfree(width=4):
    spec = parse_theory(gen.load_corpus("divfree"))
    return compile_theory(check_wellformed(spec), SynthConfig(hidden_width=width))


def test_init_params_deterministic_bitwise():
    g = _empty(3, 2)
    p1, p2 = init_params(g, 42), init_params(g, 42)
    assert p1.slots.keys() == p2.slots.keys()
    for k in p1.slots:
        assert np.array_equal(p1.slots[k], p2.slots[k])


def test_init_params_slots_are_distinct_streams():
    g = _empty(4, 4)
    p = init_params(g, 0)
    weights = [v for v in p.slots.values() if v.size > 1]
    for i in range(len(weights)):
        for j in range(i + 1, len(weights)):
            a, b = weights[i].reshape(-1), weights[j].reshape(-1)
            m = min(a.size, b.size)
            assert not np.array_equal(a[:m], b[:m])


def test_slot_fill_mean_within_three_sigma():
    bound = 0.5
    vals = slot_values(7, 123, (1_000_000,), bound)
    sigma_mean = bound / np.sqrt(3.0) / np.sqrt(vals.size)
    assert abs(vals.mean()) < 3 * sigma_mean
    assert vals.min() >= -bound and vals.max() < bound


def test_forward_identity_dense():
    g = _empty(3, 3, depth=1)
    node = g.nodes[1]
    p = ParamSet({
        node.slot("weight").slot_id: np.eye(3),
        node.slot("bias").slot_id: np.zeros(3),
    })
    x = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(forward(g, p, x), x)


def test_projection_least_norm_example():
    src = """theory p {
      signature { input: 3; output: 3; }
      primitive C : Cons = conserve { matrix: [[1.0, 1.0, 1.0]]; mode: preserve; }
    }"""
    g = compile_theory(check_wellformed(parse_theory(src)), SynthConfig(hidden_width=4, depth=1))
    core = g.nodes[1]
    p = ParamSet({
        core.slot("weight").slot_id: np.zeros((3, 3)),
        core.slot("bias").slot_id: np.zeros(3),
    })
    got = forward(g, p, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(got, [2.0, 2.0, 2.0], atol=1e-12)
    oracle = gen.least_norm_feasible(np.zeros(3), np.ones((1, 3)), np.array([6.0]))
    assert np.allclose(got, oracle, atol=1e-12)


def test_projection_fixes_feasible_points():
    src = """theory p {
      signature { input: 3; output: 3; }
      primitive C : Cons = conserve { matrix: [[1.0, 1.0, 1.0]]; mode: preserve; }
    }"""
    g = compile_theory(check_wellformed(parse_theory(src)), SynthConfig(hidden_width=4, depth=1))
    core = g.nodes[1]
    p = ParamSet({
        core.slot("weight").slot_id: np.eye(3),  # y_hat = x is already feasible
        core.slot("bias").slot_id: np.zeros(3),
    })
    x = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(forward(g, p, x), x)


def test_curl_head_single_unit_analytic():
    g = _divfree(width=1)
    node = g.nodes[1]
    p = ParamSet({
        node.slot("amplitude").slot_id: np.array([1.0]),
        node.slot("wx").slot_id: np.array([0.0]),
        node.slot("wy").slot_id: np.array([1.0]),
        node.slot("shift").slot_id: np.array([0.0]),
    })
    for y in [-1.2, 0.0, 0.7]:
        out = forward(g, p, np.array([0.3, y]))
        sech2 = 1.0 / np.cosh(y) ** 2
        assert abs(out[0] - sech2) < 1e-12
        assert out[1] == 0.0


def test_curl_head_zero_params_zero_field():
    g = _divfree(width=3)
    p = ParamSet({s.slot_id: np.zeros(s.shape) for n in g.nodes for s in n.params})
    out = forward(g, p, np.array([0.4, -0.9]))
    assert np.array_equal(out, np.zeros(2))


def test_jacobian_fd_exact_on_linear_map():
    g = _empty(4, 3, depth=1)
    node = g.nodes[1]
    w = rng.normal(rng.mix(31), 12).reshape(3, 4)
    p = ParamSet({node.slot("weight").slot_id: w, node.slot("bias").slot_id: np.zeros(3)})
    jac = jacobian_fd(g, p, rng.normal(rng.mix(32), 4), 1e-4)
    assert np.max(np.abs(jac - w)) <= 1e-9


def test_jacobian_fd_matches_analytic_chain_rule():
    g = _empty(3, 2, depth=3, width=5)
    p = init_params(g, 11)
    weights, biases = [], []
    for node in g.nodes:
        if node.kind == "dense":
            weights.append(p.slots[node.slot("weight").slot_id])
            biases.append(p.slots[node.slot("bias").slot_id])
    x = rng.normal(rng.mix(33), 3)
    expected = gen.analytic_mlp_jacobian(weights, biases, x)
    got = jacobian_fd(g, p, x, 1e-4)
    assert np.max(np.abs(got - expected)) <= 1e-6


def test_forward_rejects_non_finite():
    g = _empty(2, 2, depth=1)
    node = g.nodes[1]
    p = ParamSet({
        node.slot("weight").slot_id: np.array([[np.inf, 0.0], [0.0, 1.0]]),
        node.slot("bias").slot_id: np.zeros(2),
    })
    with pytest.raises(NonFiniteValueError) as exc:
        forward(g, p, np.ones(2))
    assert exc.value.node_id == node.node_id


def test_forward_shape_check():
    g = _empty(3, 2)
    with pytest.raises(ShapeMismatchError):
        forward(g, init_params(g, 0), np.ones(4))


def test_apply_perm_identity_and_shift():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(apply_perm((0, 1, 2, 3), x), x)
    assert np.array_equal(apply_perm((1, 2, 3, 0), x), np.array([4.0, 1.0, 2.0, 3.0]))


def test_apply_perm_composes_via_group_table():
    import random

    from theoryc.groups import compose

    r = random.Random(4)
    for _ in range(20):
        n = r.randint(2, 7)
        g = gen._rand_perm(r, n)
        h = gen._rand_perm(r, n)
        x = rng.normal(rng.mix(60, n), n)
        lhs = apply_perm(g, apply_perm(h, x))
        rhs = apply_perm(compose(g, h), x)
        assert np.array_equal(lhs, rhs)


def test_forward_batch_matches_single():
    g = _empty(3, 2)
    p = init_params(g, 8)
    xs = rng.normal(rng.mix(91), 12).reshape(4, 3)
    batch = forward(g, p, xs)
    for i in range(4):
        assert np.allclose(batch[i], forward(g, p, xs[i]), atol=1e-12)

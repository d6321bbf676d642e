"""theoryc: compile typed domain theories into constrained architecture graphs.

A theory file declares a signature plus primitives (symmetry groups,
conservation laws, causal graphs, a divergence-free field constraint) and
relations between them.  The compiler type-checks the theory, synthesizes a
computation-graph IR whose realizable functions satisfy every constraint by
construction, and emits certificates attesting soundness and (for equivariant
layers) completeness.
"""

__version__ = "0.1.0"

from .lang import (
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
    serialize_theory,
)
from .typecheck import (
    CompatibilityWitness,
    Diagnostic,
    TypedTheory,
    check_compatibility,
    check_wellformed,
    diagnose,
    enumerate_group,
)
from .archir import ArchGraph, LayerNode, LossSpec, ParamSlot, compose_sequential, validate_graph
from .synth import SynthConfig, compile_theory, compose, rule_caus, rule_cons, rule_diff, rule_sym
from .interp import ParamSet, apply_perm, forward, init_params, jacobian_fd
from .certify import (
    Certificate,
    Claim,
    certify_completeness_linear,
    certify_soundness,
    check_functoriality,
    full_certificate,
)

__all__ = [
    "ArchGraph",
    "CausalGraph",
    "Certificate",
    "Claim",
    "CompatibilityWitness",
    "ConservationLaw",
    "Diagnostic",
    "DiffConstraint",
    "LayerNode",
    "LossSpec",
    "ParamSet",
    "ParamSlot",
    "Primitive",
    "Relation",
    "Signature",
    "SymmetryGroup",
    "SynthConfig",
    "TheorySpec",
    "TypedTheory",
    "apply_perm",
    "certify_completeness_linear",
    "certify_soundness",
    "check_compatibility",
    "check_functoriality",
    "check_wellformed",
    "compile_theory",
    "compose",
    "compose_sequential",
    "conjoin",
    "diagnose",
    "enumerate_group",
    "forward",
    "full_certificate",
    "init_params",
    "jacobian_fd",
    "parse_theory",
    "rule_caus",
    "rule_cons",
    "rule_diff",
    "rule_sym",
    "serialize_theory",
    "validate_graph",
]

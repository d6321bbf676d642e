"""Theory specification language: abstract syntax, parser, serializer.

Concrete syntax is a brace-delimited block grammar designed to be written by
hand and parsed by a single-token-lookahead recursive descent:

    theory <name> {
      signature { input: <int>; output: <int>; [vars: [a, b, ...];] }
      primitive <name> : Sym  = group { degree: <int>;
                                        generators: [perm(<ints>), ...];
                                        output_action: same|invariant; }
      primitive <name> : Cons = conserve { matrix: [[<floats>], ...];
                                           mode: preserve; [input_matrix: [[<floats>], ...];]
                                           | mode: fix [<floats>]; }
      primitive <name> : Caus = dag { vars: <int>; edges: [(<int>,<int>), ...]; }
      primitive <name> : Diff = divfree2d { }
      relations { compatible(<name>, <name>); ... }
    }

Permutations use image notation: perm(i0 i1 ... i_{n-1}) maps index j to i_j.
`#` starts a comment that runs to end of line.  parse/serialize round-trip:
parse_theory(serialize_theory(s)) is structurally equal to s.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import (
    DimensionMismatchError,
    DuplicateNameError,
    TheorySyntaxError,
    UnknownKindError,
    UnknownPrimitiveError,
)

KINDS = ("Sym", "Cons", "Caus", "Diff")


@dataclass(frozen=True)
class Signature:
    input_dim: int
    output_dim: int
    variable_names: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SymmetryGroup:
    degree: int
    generators: tuple[tuple[int, ...], ...]
    output_action: str  # "same" | "invariant"


@dataclass(frozen=True)
class ConservationLaw:
    matrix: tuple[tuple[float, ...], ...]
    mode: str  # "preserve" | "fix"
    input_matrix: tuple[tuple[float, ...], ...] | None = None  # preserve only
    target: tuple[float, ...] | None = None  # fix only


@dataclass(frozen=True)
class CausalGraph:
    num_vars: int
    edges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class DiffConstraint:
    variant: str = "divfree2d"


Payload = SymmetryGroup | ConservationLaw | CausalGraph | DiffConstraint

_PAYLOAD_TYPES = {
    "Sym": SymmetryGroup,
    "Cons": ConservationLaw,
    "Caus": CausalGraph,
    "Diff": DiffConstraint,
}


@dataclass(frozen=True)
class Primitive:
    name: str
    kind: str
    payload: Payload

    def __post_init__(self):
        expected = _PAYLOAD_TYPES.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if not isinstance(self.payload, expected):
            raise ValueError(f"payload {type(self.payload).__name__} does not match kind {self.kind}")


@dataclass(frozen=True)
class Relation:
    kind: str  # only "compatible"
    args: tuple[str, ...]

    def __post_init__(self):
        if self.kind != "compatible":
            raise ValueError(f"unknown relation kind {self.kind!r}")
        if len(self.args) != 2:
            raise ValueError("compatible takes exactly 2 primitive names")


@dataclass(frozen=True)
class TheorySpec:
    name: str
    signature: Signature
    primitives: tuple[Primitive, ...]
    relations: tuple[Relation, ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.primitives]
        if len(names) != len(set(names)):
            raise ValueError("primitive names must be unique")
        declared = set(names)
        for rel in self.relations:
            for arg in rel.args:
                if arg not in declared:
                    raise ValueError(f"relation refers to undeclared primitive {arg!r}")

    def primitive(self, name: str) -> Primitive:
        for p in self.primitives:
            if p.name == name:
                return p
        raise KeyError(name)


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}\[\]():;,=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "ident" | "punct" | "eof"
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise TheorySyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def _fail(self, message: str, tok: _Token | None = None) -> TheorySyntaxError:
        tok = tok or self.cur
        return TheorySyntaxError(message, tok.line, tok.col)

    def advance(self) -> _Token:
        tok = self.cur
        self.pos += 1
        return tok

    def expect_punct(self, ch: str) -> _Token:
        if self.cur.kind != "punct" or self.cur.text != ch:
            raise self._fail(f"expected {ch!r}, found {self.cur.text or 'end of input'!r}")
        return self.advance()

    def expect_keyword(self, word: str) -> _Token:
        if self.cur.kind != "ident" or self.cur.text != word:
            raise self._fail(f"expected {word!r}, found {self.cur.text or 'end of input'!r}")
        return self.advance()

    def at_keyword(self, word: str) -> bool:
        return self.cur.kind == "ident" and self.cur.text == word

    def ident(self, what: str = "identifier") -> str:
        if self.cur.kind != "ident":
            raise self._fail(f"expected {what}, found {self.cur.text or 'end of input'!r}")
        return self.advance().text

    def integer(self, what: str = "integer") -> int:
        tok = self.cur
        if tok.kind != "number" or not re.fullmatch(r"[+-]?\d+", tok.text):
            raise self._fail(f"expected {what}, found {tok.text or 'end of input'!r}")
        self.advance()
        return int(tok.text)

    def nonneg_integer(self, what: str = "nonnegative integer") -> int:
        tok = self.cur
        value = self.integer(what)
        if value < 0:
            raise self._fail(f"expected {what}, found {tok.text}", tok)
        return value

    def number(self) -> float:
        if self.cur.kind != "number":
            raise self._fail(f"expected number, found {self.cur.text or 'end of input'!r}")
        return float(self.advance().text)

    # -- grammar productions --

    def theory(self) -> TheorySpec:
        self.expect_keyword("theory")
        name = self.ident("theory name")
        self.expect_punct("{")
        signature = self.signature()
        primitives: list[Primitive] = []
        seen: dict[str, _Token] = {}
        while self.at_keyword("primitive"):
            tok = self.cur
            prim = self.primitive()
            if prim.name in seen:
                raise DuplicateNameError(f"duplicate primitive name {prim.name!r}", tok.line, tok.col)
            seen[prim.name] = tok
            primitives.append(prim)
        relations: list[Relation] = []
        if self.at_keyword("relations"):
            relations = self.relations(set(seen))
        self.expect_punct("}")
        if self.cur.kind != "eof":
            raise self._fail(f"trailing input after theory block: {self.cur.text!r}")
        return TheorySpec(name, signature, tuple(primitives), tuple(relations))

    def signature(self) -> Signature:
        self.expect_keyword("signature")
        self.expect_punct("{")
        self.expect_keyword("input")
        self.expect_punct(":")
        tok = self.cur
        input_dim = self.nonneg_integer("input dimension")
        if input_dim < 1:
            raise self._fail("input dimension must be >= 1", tok)
        self.expect_punct(";")
        self.expect_keyword("output")
        self.expect_punct(":")
        tok = self.cur
        output_dim = self.nonneg_integer("output dimension")
        if output_dim < 1:
            raise self._fail("output dimension must be >= 1", tok)
        self.expect_punct(";")
        variable_names = None
        if self.at_keyword("vars"):
            tok = self.advance()
            self.expect_punct(":")
            self.expect_punct("[")
            names: list[str] = []
            if not (self.cur.kind == "punct" and self.cur.text == "]"):
                names.append(self.ident("variable name"))
                while self.cur.kind == "punct" and self.cur.text == ",":
                    self.advance()
                    names.append(self.ident("variable name"))
            self.expect_punct("]")
            self.expect_punct(";")
            if len(names) != input_dim:
                raise self._fail(
                    f"vars lists {len(names)} names but input dimension is {input_dim}", tok
                )
            variable_names = tuple(names)
        self.expect_punct("}")
        return Signature(input_dim, output_dim, variable_names)

    def primitive(self) -> Primitive:
        self.expect_keyword("primitive")
        name = self.ident("primitive name")
        self.expect_punct(":")
        kind_tok = self.cur
        kind = self.ident("primitive kind")
        if kind not in KINDS:
            raise UnknownKindError(f"unknown primitive kind {kind!r}", kind_tok.line, kind_tok.col)
        self.expect_punct("=")
        if kind == "Sym":
            payload: Payload = self.group_payload()
        elif kind == "Cons":
            payload = self.conserve_payload()
        elif kind == "Caus":
            payload = self.dag_payload()
        else:
            payload = self.divfree_payload()
        return Primitive(name, kind, payload)

    def group_payload(self) -> SymmetryGroup:
        self.expect_keyword("group")
        self.expect_punct("{")
        self.expect_keyword("degree")
        self.expect_punct(":")
        tok = self.cur
        degree = self.nonneg_integer("group degree")
        if degree < 1:
            raise self._fail("degree must be >= 1", tok)
        self.expect_punct(";")
        self.expect_keyword("generators")
        self.expect_punct(":")
        self.expect_punct("[")
        generators: list[tuple[int, ...]] = []
        if not (self.cur.kind == "punct" and self.cur.text == "]"):
            generators.append(self.perm())
            while self.cur.kind == "punct" and self.cur.text == ",":
                self.advance()
                generators.append(self.perm())
        self.expect_punct("]")
        self.expect_punct(";")
        self.expect_keyword("output_action")
        self.expect_punct(":")
        action_tok = self.cur
        action = self.ident("output action")
        if action not in ("same", "invariant"):
            raise self._fail(f"output_action must be 'same' or 'invariant', found {action!r}", action_tok)
        self.expect_punct(";")
        self.expect_punct("}")
        return SymmetryGroup(degree, tuple(generators), action)

    def perm(self) -> tuple[int, ...]:
        self.expect_keyword("perm")
        self.expect_punct("(")
        images: list[int] = []
        while self.cur.kind == "number":
            images.append(self.nonneg_integer("permutation image"))
        self.expect_punct(")")
        return tuple(images)

    def conserve_payload(self) -> ConservationLaw:
        self.expect_keyword("conserve")
        self.expect_punct("{")
        self.expect_keyword("matrix")
        self.expect_punct(":")
        matrix = self.matrix()
        self.expect_punct(";")
        self.expect_keyword("mode")
        self.expect_punct(":")
        mode_tok = self.cur
        mode = self.ident("conservation mode")
        if mode == "preserve":
            self.expect_punct(";")
            input_matrix = None
            if self.at_keyword("input_matrix"):
                self.advance()
                self.expect_punct(":")
                input_matrix = self.matrix()
                self.expect_punct(";")
            self.expect_punct("}")
            return ConservationLaw(matrix, "preserve", input_matrix=input_matrix)
        if mode == "fix":
            target = self.vector()
            self.expect_punct(";")
            self.expect_punct("}")
            return ConservationLaw(matrix, "fix", target=target)
        raise self._fail(f"mode must be 'preserve' or 'fix', found {mode!r}", mode_tok)

    def matrix(self) -> tuple[tuple[float, ...], ...]:
        start = self.cur
        self.expect_punct("[")
        rows = [self.vector()]
        while self.cur.kind == "punct" and self.cur.text == ",":
            self.advance()
            rows.append(self.vector())
        self.expect_punct("]")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise self._fail("matrix rows must all have the same length", start)
        return tuple(rows)

    def vector(self) -> tuple[float, ...]:
        self.expect_punct("[")
        values = [self.number()]
        while self.cur.kind == "punct" and self.cur.text == ",":
            self.advance()
            values.append(self.number())
        self.expect_punct("]")
        return tuple(values)

    def dag_payload(self) -> CausalGraph:
        self.expect_keyword("dag")
        self.expect_punct("{")
        self.expect_keyword("vars")
        self.expect_punct(":")
        tok = self.cur
        num_vars = self.nonneg_integer("variable count")
        if num_vars < 1:
            raise self._fail("vars must be >= 1", tok)
        self.expect_punct(";")
        self.expect_keyword("edges")
        self.expect_punct(":")
        self.expect_punct("[")
        edges: list[tuple[int, int]] = []
        if not (self.cur.kind == "punct" and self.cur.text == "]"):
            edges.append(self.edge())
            while self.cur.kind == "punct" and self.cur.text == ",":
                self.advance()
                edges.append(self.edge())
        self.expect_punct("]")
        self.expect_punct(";")
        self.expect_punct("}")
        return CausalGraph(num_vars, tuple(edges))

    def edge(self) -> tuple[int, int]:
        self.expect_punct("(")
        a = self.nonneg_integer("edge endpoint")
        self.expect_punct(",")
        b = self.nonneg_integer("edge endpoint")
        self.expect_punct(")")
        return (a, b)

    def divfree_payload(self) -> DiffConstraint:
        self.expect_keyword("divfree2d")
        self.expect_punct("{")
        self.expect_punct("}")
        return DiffConstraint("divfree2d")

    def relations(self, declared: set[str]) -> list[Relation]:
        self.expect_keyword("relations")
        self.expect_punct("{")
        rels: list[Relation] = []
        while self.at_keyword("compatible"):
            self.advance()
            self.expect_punct("(")
            tok_a = self.cur
            a = self.ident("primitive name")
            self.expect_punct(",")
            tok_b = self.cur
            b = self.ident("primitive name")
            self.expect_punct(")")
            self.expect_punct(";")
            for arg, tok in ((a, tok_a), (b, tok_b)):
                if arg not in declared:
                    raise UnknownPrimitiveError(
                        f"relation refers to undeclared primitive {arg!r}", tok.line, tok.col
                    )
            rels.append(Relation("compatible", (a, b)))
        self.expect_punct("}")
        return rels


def parse_theory(text: str) -> TheorySpec:
    """Parse theory source into a TheorySpec; positions in errors are 1-based."""
    return _Parser(text).theory()


# --- serializer ----------------------------------------------------------------


def _fmt_vector(values: tuple[float, ...]) -> str:
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def _fmt_matrix(rows: tuple[tuple[float, ...], ...]) -> str:
    return "[" + ", ".join(_fmt_vector(r) for r in rows) + "]"


def serialize_theory(spec: TheorySpec) -> str:
    """Render a TheorySpec to canonical source; parse(serialize(s)) == s."""
    lines = [f"theory {spec.name} {{"]
    sig = spec.signature
    sig_fields = f"input: {sig.input_dim}; output: {sig.output_dim};"
    if sig.variable_names is not None:
        sig_fields += " vars: [" + ", ".join(sig.variable_names) + "];"
    lines.append(f"  signature {{ {sig_fields} }}")
    for prim in spec.primitives:
        lines.append(f"  primitive {prim.name} : {prim.kind} = {_fmt_payload(prim.payload)}")
    if spec.relations:
        rels = " ".join(f"compatible({a}, {b});" for a, b in (r.args for r in spec.relations))
        lines.append(f"  relations {{ {rels} }}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _fmt_payload(payload: Payload) -> str:
    if isinstance(payload, SymmetryGroup):
        gens = ", ".join("perm(" + " ".join(str(i) for i in g) + ")" for g in payload.generators)
        return (
            f"group {{ degree: {payload.degree}; generators: [{gens}]; "
            f"output_action: {payload.output_action}; }}"
        )
    if isinstance(payload, ConservationLaw):
        body = f"matrix: {_fmt_matrix(payload.matrix)}; "
        if payload.mode == "preserve":
            body += "mode: preserve;"
            if payload.input_matrix is not None:
                body += f" input_matrix: {_fmt_matrix(payload.input_matrix)};"
        else:
            body += f"mode: fix {_fmt_vector(payload.target or ())};"
        return f"conserve {{ {body} }}"
    if isinstance(payload, CausalGraph):
        edges = ", ".join(f"({a},{b})" for a, b in payload.edges)
        return f"dag {{ vars: {payload.num_vars}; edges: [{edges}]; }}"
    if isinstance(payload, DiffConstraint):
        return "divfree2d { }"
    raise TypeError(f"unknown payload {type(payload).__name__}")


# --- conjunction ----------------------------------------------------------------

_PAIR_RULES = {("Sym", "Cons"), ("Sym", "Caus"), ("Cons", "Caus")}


def conjoin(t1: TheorySpec, t2: TheorySpec, name: str | None = None) -> TheorySpec:
    """Combine two theories over the same signature into their conjunction.

    Primitive names must not clash.  Compatibility relations are added for
    every cross-theory pair of kinds that has a registered pair rule, so the
    conjunction's witnesses get checked during well-formedness.
    """
    s1, s2 = t1.signature, t2.signature
    if (s1.input_dim, s1.output_dim) != (s2.input_dim, s2.output_dim):
        raise DimensionMismatchError(
            f"cannot conjoin signatures {s1.input_dim}->{s1.output_dim} "
            f"and {s2.input_dim}->{s2.output_dim}"
        )
    overlap = {p.name for p in t1.primitives} & {p.name for p in t2.primitives}
    if overlap:
        raise ValueError(f"primitive names clash in conjunction: {sorted(overlap)}")
    variable_names = s1.variable_names if s1.variable_names == s2.variable_names else None
    relations = list(t1.relations) + list(t2.relations)
    for p1 in t1.primitives:
        for p2 in t2.primitives:
            if (p1.kind, p2.kind) in _PAIR_RULES or (p2.kind, p1.kind) in _PAIR_RULES:
                relations.append(Relation("compatible", (p1.name, p2.name)))
    return TheorySpec(
        name or f"{t1.name}_and_{t2.name}",
        Signature(s1.input_dim, s1.output_dim, variable_names),
        t1.primitives + t2.primitives,
        tuple(relations),
    )


def restrict(spec: TheorySpec, names: list[str] | tuple[str, ...], name: str | None = None) -> TheorySpec:
    """Project a theory onto a subset of its primitives (relations filtered)."""
    keep = set(names)
    prims = tuple(p for p in spec.primitives if p.name in keep)
    rels = tuple(r for r in spec.relations if all(a in keep for a in r.args))
    return replace(spec, name=name or spec.name, primitives=prims, relations=rels)

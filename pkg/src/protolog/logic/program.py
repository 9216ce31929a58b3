"""Knowledge base: clauses, annotated disjunctions and neural declarations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .parser import ParseError, parse_terms
from .terms import (
    Atom, Compound, Float, Int, Term, Var, format_term, is_list_cell,
)
from .unify import variables


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class Clause:
    head: Compound
    body: tuple = ()

    @property
    def indicator(self):
        return self.head.indicator

    def to_text(self) -> str:
        if not self.body:
            return format_term(self.head) + "."
        return format_term(self.head) + " :- " + ", ".join(format_term(g) for g in self.body) + "."


@dataclass(frozen=True)
class AnnotatedDisjunction:
    """``p1::h1; ...; pk::hk :- body``.  A probabilistic fact is the k=1 case.

    ``key_vars[i]`` lists the variables that identify the ground instance
    when head ``i`` is selected (variables of that head plus body-only
    variables, probability slots excluded).
    """

    id: int
    heads: tuple  # of (prob term, Compound)
    body: tuple = ()
    key_vars: tuple = ()

    def to_text(self) -> str:
        hs = "; ".join(f"{format_term(p)}::{format_term(h)}" for p, h in self.heads)
        if not self.body:
            return hs + "."
        return hs + " :- " + ", ".join(format_term(g) for g in self.body) + "."


@dataclass(frozen=True)
class NeuralDecl:
    """``nn(net, [In...], Out) :: pred(...)`` or the classifier form
    ``nn(net, [In...], Out, [values...]) :: pred(...)``."""

    net: str
    inputs: tuple
    output: Term
    head: Compound
    domain: tuple | None = None

    @property
    def indicator(self):
        return self.head.indicator

    def to_text(self) -> str:
        ins = "[" + ",".join(format_term(t) for t in self.inputs) + "]"
        parts = [self.net, ins, format_term(self.output)]
        if self.domain is not None:
            parts.append("[" + ",".join(format_term(t) for t in self.domain) + "]")
        return f"nn({','.join(parts)}) :: {format_term(self.head)}."


Statement = Union[Clause, AnnotatedDisjunction, NeuralDecl]


@dataclass
class Program:
    statements: list = field(default_factory=list)
    mode: str = "training"

    def __post_init__(self):
        self._index: dict[tuple, list] = {}
        for st in self.statements:
            if isinstance(st, Clause):
                self._index.setdefault(st.indicator, []).append(st)
            elif isinstance(st, AnnotatedDisjunction):
                for i, (_, h) in enumerate(st.heads):
                    self._index.setdefault(h.indicator, []).append((st, i))
            elif isinstance(st, NeuralDecl):
                self._index.setdefault(st.indicator, []).append(st)

    def __len__(self):
        return len(self.statements)

    def lookup(self, indicator) -> list:
        return self._index.get(indicator, [])

    def defines(self, indicator) -> bool:
        return indicator in self._index

    @property
    def clauses(self) -> list[Clause]:
        return [s for s in self.statements if isinstance(s, Clause)]

    @property
    def disjunctions(self) -> list[AnnotatedDisjunction]:
        return [s for s in self.statements if isinstance(s, AnnotatedDisjunction)]

    @property
    def neural(self) -> list[NeuralDecl]:
        return [s for s in self.statements if isinstance(s, NeuralDecl)]

    def predicates(self) -> set:
        return set(self._index)

    def clauses_for(self, functor: str, arity: int) -> list[Clause]:
        return [s for s in self.lookup((functor, arity)) if isinstance(s, Clause)]

    def with_statements(self, statements, mode=None) -> "Program":
        return Program(list(statements), mode or self.mode)

    def to_text(self) -> str:
        return "\n".join(s.to_text() for s in self.statements) + "\n"


# --- construction -------------------------------------------------------


def _conj_to_list(t: Term) -> list[Term]:
    out = []
    while type(t) is Compound and t.functor == "," and len(t.args) == 2:
        out.extend(_conj_to_list(t.args[0]))
        t = t.args[1]
    out.append(t)
    return out


def _disj_to_list(t: Term) -> list[Term]:
    out = []
    while type(t) is Compound and t.functor == ";" and len(t.args) == 2:
        out.append(t.args[0])
        t = t.args[1]
    out.append(t)
    return out


def _list_items(t: Term, where) -> list[Term]:
    items = []
    while is_list_cell(t):
        items.append(t.args[0])
        t = t.args[1]
    if not (type(t) is Atom and t.name == "[]"):
        raise ProgramError(f"expected a proper list in {where}")
    return items


def _check_head(t: Term, line: int, col: int) -> Compound:
    if type(t) is Var:
        raise ParseError("variable in clause functor position", line, col)
    if type(t) is Atom:
        return Compound(t.name, ())
    if type(t) is not Compound:
        raise ParseError(f"clause head must be callable, got {format_term(t)}", line, col)
    return t


def _check_goal(t: Term, line: int, col: int) -> Term:
    if type(t) is Var:
        # a bare variable goal is a meta-call
        return Compound("call", (t,))
    if type(t) is Atom:
        return Compound(t.name, ())
    if type(t) is not Compound:
        raise ParseError(f"goal must be callable, got {format_term(t)}", line, col)
    if t.functor == ";" and len(t.args) == 2:
        raise ParseError("disjunction in clause bodies is not supported", line, col)
    return t


def _is_prob_annotation(t: Term) -> bool:
    return type(t) in (Float, Int, Var)


def _ad_key_vars(heads, body) -> tuple:
    slot_vars = [p for p, _ in heads if type(p) is Var]
    head_vars = [variables(h) for _, h in heads]
    all_head_vars = [v for vs in head_vars for v in vs]
    body_only = [
        v for g in body for v in variables(g)
        if not any(v is w for w in all_head_vars) and not any(v is s for s in slot_vars)
    ]
    seen = []
    for v in body_only:
        if not any(v is w for w in seen):
            seen.append(v)
    return tuple(tuple(hv) + tuple(seen) for hv in head_vars)


def build_program(terms, mode: str = "training") -> Program:
    statements: list = []
    ad_id = 0
    for t, line, col in terms:
        body: list[Term] = []
        head = t
        if type(t) is Compound and t.functor == ":-" and len(t.args) == 2:
            head = t.args[0]
            body = [_check_goal(g, line, col) for g in _conj_to_list(t.args[1])]
        elif type(t) is Compound and t.functor == ":-" and len(t.args) == 1:
            raise ParseError("directives are not supported", line, col)

        if type(head) is Compound and head.functor == ";" and len(head.args) == 2:
            parts = _disj_to_list(head)
        elif type(head) is Compound and head.functor == "::" and len(head.args) == 2:
            parts = [head]
        else:
            statements.append(Clause(_check_head(head, line, col), tuple(body)))
            continue

        # annotated heads
        if len(parts) == 1:
            ann, h = parts[0].args
            if type(ann) is Compound and ann.functor == "nn":
                statements.append(_neural_decl(ann, h, body, line, col))
                continue
        heads = []
        for part in parts:
            if not (type(part) is Compound and part.functor == "::" and len(part.args) == 2):
                raise ParseError("every disjunct of an annotated disjunction needs a probability", line, col)
            ann, h = part.args
            if not _is_prob_annotation(ann):
                raise ParseError(f"unknown annotation form {format_term(ann)}", line, col)
            if type(ann) in (Float, Int) and not 0.0 <= float(ann.value) <= 1.0:
                raise ParseError(f"probability {ann.value} outside [0,1]", line, col)
            heads.append((ann, _check_head(h, line, col)))
        static = [float(p.value) for p, _ in heads if type(p) in (Float, Int)]
        if sum(static) > 1.0 + 1e-9:
            raise ParseError("annotated disjunction probabilities sum above 1", line, col)
        statements.append(AnnotatedDisjunction(ad_id, tuple(heads), tuple(body),
                                               _ad_key_vars(heads, body)))
        ad_id += 1
    return Program(statements, mode)


def _neural_decl(ann: Compound, head: Term, body, line, col) -> NeuralDecl:
    if body:
        raise ParseError("neural declarations cannot have a body", line, col)
    if len(ann.args) not in (3, 4) or type(ann.args[0]) is not Atom:
        raise ParseError("neural declaration must be nn(Name, [Inputs], Output[, Domain])", line, col)
    head = _check_head(head, line, col)
    inputs = tuple(_list_items(ann.args[1], "nn/3 inputs"))
    domain = tuple(_list_items(ann.args[3], "nn/4 domain")) if len(ann.args) == 4 else None
    return NeuralDecl(ann.args[0].name, inputs, ann.args[2], head, domain)


def parse_program(text: str, mode: str = "training") -> Program:
    """Parse program source into a :class:`Program`."""
    return build_program(parse_terms(text), mode)


def program_signature(program: Program):
    """Structural fingerprint, invariant under variable renaming."""
    return [_canon_statement(s) for s in program.statements]


def _canon_statement(st):
    names: dict = {}

    def canon(t):
        if type(t) is Var:
            if t not in names:
                names[t] = len(names)
            return ("$VAR", names[t])
        if type(t) is Compound:
            return (t.functor,) + tuple(canon(a) for a in t.args)
        return t

    if isinstance(st, Clause):
        return ("clause", canon(st.head), tuple(canon(g) for g in st.body))
    if isinstance(st, AnnotatedDisjunction):
        return ("ad", tuple((canon(p), canon(h)) for p, h in st.heads),
                tuple(canon(g) for g in st.body))
    return ("nn", st.net, tuple(canon(t) for t in st.inputs), canon(st.output),
            canon(st.head), None if st.domain is None else tuple(canon(t) for t in st.domain))


def replace_predicate(program: Program, indicator, new_statements, mode=None) -> Program:
    """Replace every definition of ``indicator`` by ``new_statements``.

    The replacement is inserted where the first old definition stood.
    """
    out = []
    inserted = False
    for st in program.statements:
        if isinstance(st, (Clause, NeuralDecl)) and st.indicator == indicator:
            if not inserted:
                out.extend(new_statements)
                inserted = True
            continue
        out.append(st)
    if not inserted:
        raise ProgramError(f"{indicator[0]}/{indicator[1]} is not defined")
    return Program(out, mode or program.mode)


__all__ = [
    "AnnotatedDisjunction", "Clause", "NeuralDecl", "Program", "ProgramError",
    "build_program", "parse_program", "program_signature", "replace_predicate",
]

import pytest
from hypothesis import given, settings, strategies as st

from protolog.logic.errors import InstantiationError, PrologTypeError, ResourceError, UnknownPredicateError
from protolog.logic.parser import ParseError, parse_term
from protolog.logic.program import AnnotatedDisjunction, NeuralDecl, parse_program, program_signature
from protolog.logic.solver import Solver, eval_builtin, solve
from protolog.logic.terms import Atom, Compound, Int, TensorRef, Var, format_term
from protolog.logic.unify import Substitution, unify
from protolog.nesy.engine import program_text

ANIMALS = """
bigger(elephant, horse).
bigger(horse, donkey).
bigger(donkey, dog).
is_bigger(X, Y) :- bigger(X, Y).
is_bigger(X, Y) :- bigger(X, Z), is_bigger(Z, Y).
"""


def term(text):
    return parse_term(text)[0]


def solutions(goal_text, program, var, **opts):
    goal, names = parse_term(goal_text)
    return [s.resolve(names[var]) for s, _ in solve(goal, program, **opts)]


# --- parsing ---------------------------------------------------------------


def test_single_fact():
    p = parse_program("p(a).")
    assert len(p) == 1
    assert p.clauses[0].head == Compound("p", (Atom("a"),))


def test_annotated_disjunction_syntax():
    p = parse_program("0.3::d(1);0.7::d(2).")
    (ad,) = p.disjunctions
    assert isinstance(ad, AnnotatedDisjunction)
    assert [h for _, h in ad.heads] == [term("d(1)"), term("d(2)")]


def test_reference_program_predicates():
    p = parse_program(program_text("reference"))
    for ind in [("number", 3), ("multi_addition", 3), ("maplist", 3), ("addition", 3)]:
        assert p.defines(ind)
    assert len(p.lookup(("encode", 3))) == 2
    assert len(p.lookup(("decode", 3))) == 2
    (ad,) = p.disjunctions
    assert len(ad.heads) == 10
    assert {d.net for d in p.neural} == {"encoder", "decoder"}
    assert all(isinstance(d, NeuralDecl) for d in p.neural)


def test_clause_count_matches_terminators():
    src = "a. b :- a. 0.5::c. 0.2::d; 0.3::e. % comment.\n"
    assert len(parse_program(src)) == 4


@pytest.mark.parametrize("src, line, col", [
    ("p(a", 1, 4),
    ("p.\nq :- r(", 2, 8),
])
def test_syntax_error_position(src, line, col):
    with pytest.raises(ParseError) as err:
        parse_program(src)
    assert (err.value.line, err.value.col) == (line, col)


def test_unknown_annotation_rejected():
    with pytest.raises(ParseError, match="annotation"):
        parse_program("foo::p.")


def test_variable_functor_rejected():
    with pytest.raises(ParseError, match="functor"):
        parse_program("X(a).")


def test_list_round_trip():
    assert format_term(term("[a,b|T]")) == "[a,b|T]"
    assert format_term(term("[1, 2 ,3]")) == "[1,2,3]"


def test_program_round_trip():
    p = parse_program(program_text("reference"))
    again = parse_program(p.to_text())
    assert program_signature(again) == program_signature(p)


atoms = st.sampled_from(["a", "b", "foo", "x1", "[]", "'Hello world'"])
names = st.sampled_from(["X", "Y", "Zed", "_A"])
leaves = st.one_of(
    atoms.map(lambda a: a),
    names,
    st.integers(-1000, 1000).map(str),
    st.floats(-1e3, 1e3, allow_nan=False).map(lambda f: repr(float(f))),
)


def _compound(children):
    return st.builds(lambda f, args: f"{f}({','.join(args)})",
                     st.sampled_from(["f", "g", "h"]), st.lists(children, min_size=1, max_size=3))


def _list(children):
    return st.builds(lambda xs: "[" + ",".join(xs) + "]", st.lists(children, max_size=3))


term_texts = st.recursive(leaves, lambda c: st.one_of(_compound(c), _list(c)), max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(term_texts)
def test_term_print_parse_round_trip(text):
    t = term(text)
    printed = format_term(t)
    assert format_term(term(printed)) == printed


# --- unification -----------------------------------------------------------


def test_textbook_mgu():
    x, y = Var("X"), Var("Y")
    s = unify(Compound("f", (x, Atom("a"))), Compound("f", (Atom("b"), y)))
    assert s.resolve(x) == Atom("b") and s.resolve(y) == Atom("a")


def test_unify_identity_adds_nothing():
    x = Var("X")
    s = unify(x, x)
    assert s is not None and not s.bindings


def test_tensor_refs_are_opaque():
    i = Var("I")
    s = unify(TensorRef(7), i)
    assert s.resolve(i) == TensorRef(7)
    assert unify(TensorRef(7), TensorRef(8)) is None
    assert unify(TensorRef(7), Atom("a")) is None


def test_failure_leaks_no_bindings():
    x, y = Var("X"), Var("Y")
    s = Substitution()
    mark = s.mark()
    assert not s.unify(Compound("f", (x, y, Atom("a"))), Compound("f", (Atom("b"), Atom("c"), Atom("d"))))
    s.undo_to(mark)
    assert s.walk(x) is x and s.walk(y) is y
    assert unify(Compound("g", (x, Atom("a"))), Compound("g", (Atom("b"), Atom("b"))), s) is None
    assert s.walk(x) is x


def test_occurs_check_flag():
    x = Var("X")
    assert unify(x, Compound("f", (x,)), occurs_check=True) is None
    assert unify(x, Compound("f", (x,)), occurs_check=False) is not None


@settings(max_examples=300, deadline=None)
@given(term_texts, term_texts)
def test_mgu_makes_terms_equal(a_text, b_text):
    # parse in one clause so shared names denote shared variables
    pair, _ = parse_term(f"p({a_text}, {b_text})")
    a, b = pair.args
    s = unify(a, b, occurs_check=True)
    if s is not None:
        assert format_term(s.resolve(a)) == format_term(s.resolve(b))
        once = s.resolve(a)
        assert s.resolve(once) == once


# --- resolution --------------------------------------------------------------


def test_is_bigger_single_answer():
    p = parse_program("bigger(elephant,horse). is_bigger(X,Y):-bigger(X,Y).")
    assert solutions("is_bigger(elephant,Q)", p, "Q") == [Atom("horse")]


def test_animal_closure():
    p = parse_program(ANIMALS)
    got = {a.name for a in solutions("is_bigger(X,dog)", p, "X")}
    assert got == {"elephant", "horse", "donkey"}


def test_number_recursion_with_ground_digits():
    src = program_text("reference").split("multi_addition")[0] + "digit(3,3). digit(5,5).\n"
    p = parse_program(src)
    assert solutions("number([3,5],0,R)", p, "R") == [Int(35)]


def test_ad_head_proof_set():
    p = parse_program("0.3::d(1);0.7::d(2).")
    ((_, proof),) = list(solve(term("d(1)"), p))
    (lit,) = proof
    assert lit.head == 0
    assert lit.key[0] == p.disjunctions[0].id


def test_deterministic_proofs_are_empty():
    p = parse_program(ANIMALS)
    for _, proof in solve(term("is_bigger(elephant,dog)"), p):
        assert len(proof) == 0


def test_unknown_predicate_is_an_error():
    p = parse_program("a.")
    with pytest.raises(UnknownPredicateError):
        list(solve(term("nope(1)"), p))


def test_depth_limit():
    p = parse_program("loop(X) :- loop(X).")
    with pytest.raises(ResourceError):
        list(solve(term("loop(1)"), p, depth_limit=500))


def test_left_to_right_depth_first_order():
    p = parse_program("c(1). c(2). d(a). d(b). pair(X,Y) :- c(X), d(Y).")
    goal, names = parse_term("pair(X,Y)")
    got = [(s.resolve(names["X"]).value, s.resolve(names["Y"]).name) for s, _ in solve(goal, p)]
    assert got == [(1, "a"), (1, "b"), (2, "a"), (2, "b")]


def test_clause_variables_are_renamed():
    p = parse_program("same(X, X). both(A, B) :- same(A, 1), same(B, 2).")
    goal, names = parse_term("both(P, Q)")
    ((s, _),) = list(solve(goal, p))
    assert (s.resolve(names["P"]), s.resolve(names["Q"])) == (Int(1), Int(2))


def test_shipped_programs_terminate_without_occurs_check():
    for name in ("reference", "didactic"):
        p = parse_program(program_text(name))
        solver = Solver(p, occurs_check=False, depth_limit=10_000)
        goal = term("maplist(prototype, [1,2,3], Ps)") if name == "reference" else term("prototype(1, P)")
        assert len(list(solver.solve(goal))) == 1


# --- builtins ---------------------------------------------------------------


def test_is_binds_result():
    (s,) = eval_builtin(term("Z is 3+4"))
    z = next(v for v in s.bindings if v.name == "Z")
    assert s.resolve(z) == Int(7)


def test_arithmetic_float_contagion():
    goal, names = parse_term("Z is 3 + 0.5 * 2")
    (s,) = eval_builtin(goal)
    assert s.resolve(names["Z"]).value == 4.0


def test_ground_and_var():
    assert len(eval_builtin(term("ground(f(a))"))) == 1
    assert eval_builtin(term("ground(f(X))")) == []
    assert len(eval_builtin(term("var(X)"))) == 1
    assert eval_builtin(term("var(a)")) == []


def test_between_enumerates():
    goal, names = parse_term("between(0,9,X)")
    got = [s.resolve(names["X"]).value for s in eval_builtin(goal)]
    assert got == list(range(10))


def test_not_unifiable():
    assert len(eval_builtin(term("a \\= b"))) == 1
    assert eval_builtin(term("f(X) \\= f(a)")) == []


def test_is_with_unbound_right_side():
    with pytest.raises(InstantiationError):
        eval_builtin(term("Z is X + 1"))


def test_builtin_arity_mismatch():
    with pytest.raises(PrologTypeError):
        eval_builtin(term("between(1, 2)"))


def test_call3_applies_partial_goal():
    p = parse_program("add(N, X, Y) :- Y is X + N.")
    assert solutions("call(add(10), 1, Y)", p, "Y") == [Int(11)]


def test_maplist_defined_in_program():
    src = program_text("reference")
    p = parse_program(src + "\ninc(X, Y) :- Y is X + 1.\n")
    assert solutions("maplist(inc, [1,2,3], L)", p, "L") == [term("[2,3,4]")]


def test_conjunctive_query_goal():
    p = parse_program("c(1). c(2). c(3).")
    assert solutions("c(X), X > 1", p, "X") == [Int(2), Int(3)]
    assert solutions("call((c(X), X < 2))", p, "X") == [Int(1)]

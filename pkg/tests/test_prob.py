import numpy as np
import pytest

import randprog
from protolog.logic.errors import ResourceError
from protolog.logic.program import parse_program
from protolog.prob.engine import answer, brute_force_probability, query_probability
from protolog.prob.proofs import ChoiceLiteral, ContractError, ProofSet
from protolog.tensor import autodiff as ad


def lit(name, p, head=0):
    return ChoiceLiteral((name,), head, p)


def test_single_fact_probability():
    assert query_probability([ProofSet([lit("a", 0.5)])]).item() == 0.5


def test_independent_facts():
    proofs = [ProofSet([lit("a", 0.5)]), ProofSet([lit("b", 0.6)])]
    assert query_probability(proofs).item() == pytest.approx(0.8, abs=1e-15)


def test_mutually_exclusive_heads_not_double_counted():
    proofs = [ProofSet([lit("ad", 0.3, 0)]), ProofSet([lit("ad", 0.7, 1)])]
    assert query_probability(proofs).item() == pytest.approx(1.0, abs=1e-15)


def test_inconsistent_proof_set_rejected():
    with pytest.raises(ContractError):
        ProofSet([lit("ad", 0.3, 0), lit("ad", 0.7, 1)])


def test_empty_proof_is_certain():
    assert query_probability([ProofSet()]).item() == 1.0
    assert query_probability([]).item() == 0.0


def test_answers_sorted_by_probability():
    p = parse_program("0.3::d(1);0.7::d(2).")
    got = [(a.substitution["X"].value, a.value) for a in answer("d(X)", p)]
    assert got == [(2, pytest.approx(0.7)), (1, pytest.approx(0.3))]


def test_deterministic_answer_is_one():
    p = parse_program("bigger(elephant,horse). is_bigger(X,Y):-bigger(X,Y).")
    (a,) = answer("is_bigger(elephant,horse)", p)
    assert a.value == 1.0


def test_shared_choice_grouped_into_one_answer():
    p = parse_program("0.5::a. 0.6::b. q(1) :- a. q(1) :- b. q(2) :- a, b.")
    got = {a.substitution["X"].value: a.value for a in answer("q(X)", p)}
    assert got[1] == pytest.approx(0.8) and got[2] == pytest.approx(0.3)


def test_brute_force_examples():
    assert brute_force_probability("h", parse_program("0.5::h.")) == 0.5
    p = parse_program("0.5::a. 0.6::b. q:-a,b.")
    assert brute_force_probability("q", p) == pytest.approx(0.30, abs=1e-15)


def test_brute_force_refuses_large_programs():
    src = "".join(f"0.5::f({i}).\n" for i in range(25)) + "q :- f(X).\n"
    with pytest.raises(ResourceError):
        brute_force_probability("q", parse_program(src), max_choices=20)


@pytest.mark.parametrize("memo", ["ad", "all", "none"])
def test_random_programs_match_enumeration(memo):
    checked = 0
    for seed in range(30):
        worst = randprog.compare(seed, memo=memo)
        if worst is not None:
            assert worst < 1e-9, seed
            checked += 1
    assert checked >= 25


def test_monotone_in_proofs():
    rng = np.random.default_rng(3)
    facts = [lit(f"f{i}", float(rng.uniform(0.05, 0.95))) for i in range(6)]
    proofs = []
    prev = 0.0
    for _ in range(8):
        k = int(rng.integers(1, 4))
        proofs.append(ProofSet(rng.choice(facts, size=k, replace=False).tolist()))
        cur = query_probability(proofs).item()
        assert cur >= prev - 1e-15
        prev = cur


def test_ad_heads_sum_at_most_one():
    p = parse_program("0.2::c(r); 0.3::c(g); 0.1::c(b). pick(X) :- c(X). pick(X) :- c(X), c(r).")
    total = sum(a.value for a in answer("pick(X)", p))
    assert total <= 1 + 1e-9


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = 5
        ps = rng.uniform(0.05, 0.95, size=n)
        sets = [rng.choice(n, size=int(rng.integers(1, 4)), replace=False) for _ in range(4)]

        def prob(values, track=False):
            leaves = [ad.Tensor(np.array(v), requires_grad=track) for v in values]
            proofs = [ProofSet([ChoiceLiteral((f"x{i}",), 0, leaves[i]) for i in s]) for s in sets]
            return query_probability(proofs), leaves

        out, leaves = prob(ps, track=True)
        out.backward()
        h = 1e-5
        for i in range(n):
            up, down = ps.copy(), ps.copy()
            up[i] += h
            down[i] -= h
            fd = (prob(up)[0].item() - prob(down)[0].item()) / (2 * h)
            g = 0.0 if leaves[i].grad is None else float(leaves[i].grad)
            assert abs(g - fd) <= 1e-4 * max(1.0, abs(fd))

"""Query answering under possible-world semantics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..logic.errors import ResourceError
from ..logic.parser import parse_term
from ..logic.program import Program
from ..logic.solver import QueryContext, Solver, variant_key
from ..logic.terms import Term
from ..tensor import autodiff as ad
from .circuit import Circuit, compile_proofs, evaluate_circuit
from .proofs import ChoiceLiteral, ProofSet

EPS = 1e-7


def static_value(lit: ChoiceLiteral):
    p = lit.prob
    if isinstance(p, (float, int)):
        return float(p)
    if isinstance(p, ad.Tensor):
        return p
    raise TypeError(f"literal {lit!r} has a symbolic probability; pass a value function")


def leaf_tensor(literals, value=static_value) -> ad.Tensor:
    vals = [value(lit) for lit in literals]
    if not any(isinstance(v, ad.Tensor) for v in vals):
        return ad.Tensor(np.array(vals, dtype=np.float64))
    return ad.stack([ad.as_tensor(v) for v in vals]) if vals else ad.Tensor(np.zeros(0))


def query_probability(proofs, value=static_value) -> ad.Tensor:
    """Exact probability that at least one proof holds, as a differentiable scalar."""
    circuit = compile_proofs(proofs)
    return evaluate_circuit(circuit, leaf_tensor(circuit.literals, value))


@dataclass
class QueryAnswer:
    substitution: dict
    probability: ad.Tensor
    proofs: list
    circuit: Circuit | None = None

    @property
    def value(self) -> float:
        return float(self.probability.data)


def _goal_and_vars(goal, query_vars=None):
    if isinstance(goal, str):
        term, names = parse_term(goal)
        return term, names
    if query_vars is None:
        from ..logic.unify import variables
        names = {}
        for v in variables(goal):
            if v.name != "_":
                names.setdefault(v.name, v)
        return goal, names
    return goal, dict(query_vars)


def collect_solutions(solver: Solver, goal: Term, names: dict, ctx: QueryContext):
    """Group solutions by the answer substitution over the query variables."""
    from ..logic.unify import Substitution

    s = Substitution(occurs_check=solver.occurs_check)
    groups: dict = {}
    order = []
    for proof in solver.run(goal, s, ctx):
        binding = {n: s.resolve(v) for n, v in names.items()}
        key = variant_key(tuple(binding.values()))
        g = groups.get(key)
        if g is None:
            g = groups[key] = (binding, [])
            order.append(key)
        g[1].append(ProofSet(proof.values()))
    return [groups[k] for k in order]


def answer(goal, program: Program | None = None, *, solver: Solver | None = None,
           ctx: QueryContext | None = None, value=static_value, query_vars=None,
           **solver_opts) -> list[QueryAnswer]:
    """All answers to ``goal`` with their exact probabilities, most probable first."""
    if solver is None:
        solver = Solver(program, **solver_opts)
    goal, names = _goal_and_vars(goal, query_vars)
    ctx = ctx or QueryContext()
    out = []
    for binding, proofs in collect_solutions(solver, goal, names, ctx):
        circuit = compile_proofs(proofs)
        prob = evaluate_circuit(circuit, leaf_tensor(circuit.literals, value))
        out.append(QueryAnswer(binding, prob, proofs, circuit))
    # stable: ties keep discovery order
    out.sort(key=lambda a: -a.value)
    return out


def brute_force_probability(goal, program: Program, *, max_choices: int = 20,
                            value=static_value, **solver_opts) -> float:
    """Sum of world probabilities over all total choices entailing ``goal``.

    Choice variables are discovered by one unrestricted search; every
    world is then checked by re-running the search with each disjunction
    forced to the world's head.
    """
    goal, _ = _goal_and_vars(goal)
    solver = Solver(program, memo="none", **solver_opts)
    ctx = QueryContext()
    for _ in solver.solve(goal, ctx=ctx):
        pass
    heads: dict = {}
    for (key, head), lit in ctx.literals.items():
        heads.setdefault(key, {})[head] = float(value(lit))
    keys = sorted(heads, key=repr)
    if len(keys) > max_choices:
        raise ResourceError(f"{len(keys)} choice variables exceed the enumeration limit {max_choices}")

    options = []
    for k in keys:
        hs = sorted(heads[k])
        ps = [heads[k][h] for h in hs]
        opts = list(zip(hs, ps))
        opts.append((None, 1.0 - sum(ps)))
        options.append(opts)

    total = 0.0
    for world in itertools.product(*options):
        w = 1.0
        for _, p in world:
            w *= p
        if w == 0.0:
            continue
        chosen = {k: h for k, (h, _) in zip(keys, world)}
        checker = Solver(program, memo="none",
                         literal_filter=lambda lit, _ctx, c=chosen: c.get(lit.key) == lit.head,
                         **solver_opts)
        if next(iter(checker.solve(goal)), None) is not None:
            total += w
    return total


__all__ = [
    "EPS", "QueryAnswer", "answer", "brute_force_probability", "collect_solutions",
    "leaf_tensor", "query_probability", "static_value",
]

"""Depth-first SLD resolution over a :class:`Program`.

The solver is an explicit choicepoint machine (no Python recursion per
resolution step), so derivations may be thousands of steps deep.
Annotated disjunction heads resolve like clauses; once the disjunction's
body has succeeded the selected head is recorded as a
:class:`ChoiceLiteral` in the running proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from ..prob.proofs import ChoiceLiteral, ProofSet
from . import builtins as bi
from .errors import InstantiationError, PrologTypeError, ResourceError, UnknownPredicateError
from .program import Clause, NeuralDecl, Program
from .terms import Atom, Compound, Float, Int, Prob, Term, Var, fresh_scope
from .unify import Substitution, rename

DEFAULT_DEPTH_LIMIT = 10_000


class _ChoiceGoal(Term):
    """Internal goal appended to an annotated disjunction's body."""

    __slots__ = ("ad", "head", "atom", "prob", "key_vars")

    def __init__(self, ad, head, atom, prob, key_vars):
        self.ad = ad
        self.head = head
        self.atom = atom
        self.prob = prob
        self.key_vars = key_vars

    def __repr__(self):
        return f"$choice({self.ad.id}, {self.head})"


@dataclass
class QueryContext:
    """Per-query mutable state: literal table, memo tables, neural caches."""

    counter: int = 0
    literals: dict = field(default_factory=dict)
    memo: dict = field(default_factory=dict)
    in_progress: set = field(default_factory=set)
    neural: object = None
    steps: int = 0


class Solver:
    """SLD resolution engine.

    ``memo`` selects which predicates get per-query variant tabling:
    ``"ad"`` (predicates defined by annotated disjunctions), ``"all"`` or
    ``"none"``.  Tabled calls are evaluated eagerly, so ``"all"`` should
    only be used with programs whose calls have finitely many answers.
    """

    def __init__(self, program: Program, *, depth_limit: int = DEFAULT_DEPTH_LIMIT,
                 occurs_check: bool = False, memo: str = "ad", neural=None,
                 literal_filter=None):
        if memo not in ("ad", "all", "none"):
            raise ValueError(f"unknown memo policy {memo!r}")
        self.program = program
        self.depth_limit = depth_limit
        self.occurs_check = occurs_check
        self.memo = memo
        self.neural = neural
        self.literal_filter = literal_filter
        self._memo_preds = self._tabled_predicates()

    def _tabled_predicates(self) -> set:
        if self.memo == "none":
            return set()
        out = set()
        for ind in self.program.predicates():
            entries = self.program.lookup(ind)
            if self.memo == "all" or any(type(e) is tuple for e in entries):
                if not any(isinstance(e, NeuralDecl) for e in entries):
                    out.add(ind)
        return out

    # public API ---------------------------------------------------------

    def solve(self, goal: Term, subst: Substitution | None = None,
              ctx: QueryContext | None = None) -> Iterator[tuple[Substitution, ProofSet]]:
        s = subst.copy() if subst is not None else Substitution(occurs_check=self.occurs_check)
        s.trail.clear()
        ctx = ctx or QueryContext()
        for proof in self.run(goal, s, ctx):
            snap = s.copy()
            yield snap, ProofSet(proof.values())

    def run(self, goal: Term, s: Substitution, ctx: QueryContext, depth0: int = 0):
        """Yield the proof dict of every solution; ``s`` holds its bindings.

        The caller must consume the binding state before resuming.
        """
        goal = s.walk(goal)
        limit = self.depth_limit
        stack: list = []
        goals = (goal, depth0, None)
        proof: dict = {}
        while True:
            if goals is None:
                yield proof
            else:
                term, depth, rest = goals
                if depth > limit:
                    raise ResourceError(f"depth limit {limit} exceeded")
                ctx.steps += 1
                res = self._step(term, depth, s, ctx)
                if res is True:
                    goals = rest
                    continue
                rt = type(res)
                if rt is tuple:
                    for g in reversed(res):
                        rest = (g, depth + 1, rest)
                    goals = rest
                    continue
                if rt is _Lits:
                    merged = _merge(proof, res.literals)
                    if merged is not None:
                        proof = merged
                        goals = rest
                        continue
                elif res:
                    stack.append((s.mark(), rest, proof, res, depth))
            # backtrack into the most recent choicepoint
            while stack:
                mark, rest, cp_proof, gen, depth = stack[-1]
                s.undo_to(mark)
                item = next(gen, None)
                if item is None:
                    stack.pop()
                    continue
                body, lits = item
                merged = _merge(cp_proof, lits) if lits else cp_proof
                if merged is None:
                    continue
                proof = merged
                for g in reversed(body):
                    rest = (g, depth + 1, rest)
                goals = rest
                break
            else:
                return

    # one resolution step -------------------------------------------------

    def _step(self, term: Term, depth: int, s: Substitution, ctx: QueryContext):
        if type(term) is _ChoiceGoal:
            return self._choice(term, s, ctx)
        term = s.walk(term)
        tt = type(term)
        if tt is Atom:
            term = Compound(term.name, ())
        elif tt is Var:
            raise InstantiationError("goal is an unbound variable")
        elif tt is not Compound:
            raise PrologTypeError(f"goal is not callable: {term!r}")
        ind = (term.functor, len(term.args))
        if ind == (",", 2):
            # conjunctions reach here only from query text and meta-calls
            return term.args
        fn = bi.DETERMINISTIC.get(ind)
        if fn is not None:
            return fn(s, *term.args) or None
        fn = bi.NONDETERMINISTIC.get(ind)
        if fn is not None:
            return fn(s, *term.args)
        if self.neural is not None:
            handler = self.neural.builtin(ind)
            if handler is not None:
                return handler(s, ctx, *term.args) or None
        entries = self.program.lookup(ind)
        if not entries:
            raise UnknownPredicateError(f"unknown predicate {ind[0]}/{ind[1]}")
        if ind in self._memo_preds:
            return self._tabled(term, depth, s, ctx)
        return self._resolve(term, entries, s, ctx)

    def _resolve(self, term: Compound, entries, s: Substitution, ctx: QueryContext):
        for entry in entries:
            mark = s.mark()
            et = type(entry)
            if et is Clause:
                mapping: dict = {}
                scope = fresh_scope()
                head = rename(entry.head, mapping, scope)
                if s.unify(term, head):
                    yield tuple(rename(g, mapping, scope) for g in entry.body), ()
                else:
                    s.undo_to(mark)
            elif et is tuple:
                ad, i = entry
                mapping = {}
                scope = fresh_scope()
                prob, head = ad.heads[i]
                head = rename(head, mapping, scope)
                if s.unify(term, head):
                    body = tuple(rename(g, mapping, scope) for g in ad.body)
                    marker = _ChoiceGoal(ad, i, head, rename(prob, mapping, scope),
                                         tuple(rename(v, mapping, scope) for v in ad.key_vars[i]))
                    yield body + (marker,), ()
                else:
                    s.undo_to(mark)
            elif et is NeuralDecl:
                if self.neural is None:
                    raise UnknownPredicateError(f"no neural backend for network {entry.net!r}")
                yield from self.neural.resolve_decl(entry, term, s, ctx)

    def _choice(self, goal: _ChoiceGoal, s: Substitution, ctx: QueryContext):
        key_terms = []
        for v in goal.key_vars:
            t = s.resolve(v)
            if not s.is_ground(t):
                raise InstantiationError(
                    f"annotated disjunction {goal.ad.id} selected with non-ground instance"
                )
            key_terms.append(t)
        key = (goal.ad.id, tuple(key_terms))
        lit = ctx.literals.get((key, goal.head))
        if lit is None:
            prob = s.walk(goal.prob)
            if type(prob) in (Int, Float):
                value = float(prob.value)
                if not 0.0 <= value <= 1.0:
                    raise PrologTypeError(f"probability {value} outside [0,1]")
                prob = value
            elif type(prob) is Var:
                raise InstantiationError("probability slot unbound after body")
            elif type(prob) is not Prob:
                raise PrologTypeError(f"probability slot bound to non-number {prob!r}")
            lit = ChoiceLiteral(key, goal.head, prob, s.resolve(goal.atom))
            ctx.literals[(key, goal.head)] = lit
        if self.literal_filter is not None and not self.literal_filter(lit, ctx):
            return None
        return _Lits((lit,))

    # variant tabling -----------------------------------------------------

    def _tabled(self, term: Compound, depth: int, s: Substitution, ctx: QueryContext):
        resolved = s.resolve(term)
        key = variant_key(resolved)
        answers = ctx.memo.get(key)
        if answers is None:
            if key in ctx.in_progress:
                return self._resolve(term, self.program.lookup(term.indicator), s, ctx)
            ctx.in_progress.add(key)
            try:
                answers = []
                mark = s.mark()
                for proof in self.run(resolved, s, ctx, depth + 1):
                    answers.append((s.resolve(resolved), tuple(proof.values())))
                s.undo_to(mark)
            finally:
                ctx.in_progress.discard(key)
            ctx.memo[key] = answers
        return self._replay(term, answers, s)

    @staticmethod
    def _replay(term, answers, s):
        for ans, lits in answers:
            mark = s.mark()
            if s.unify(term, rename(ans, {})):
                yield (), lits
            else:
                s.undo_to(mark)


class _Lits:
    __slots__ = ("literals",)

    def __init__(self, literals):
        self.literals = literals


def _merge(proof: dict, literals) -> dict | None:
    out = None
    for lit in literals:
        prev = (out or proof).get(lit.key)
        if prev is None:
            if out is None:
                out = dict(proof)
            out[lit.key] = lit
        elif prev.head != lit.head:
            return None
    return proof if out is None else out


def variant_key(t: Term, names: dict | None = None):
    """Hashable key equal for terms identical up to variable renaming."""
    if names is None:
        names = {}
    tt = type(t)
    if tt is Var:
        n = names.get(t)
        if n is None:
            n = names[t] = len(names)
        return ("$V", n)
    if tt is Compound:
        return (t.functor,) + tuple(variant_key(a, names) for a in t.args)
    return t


def solve(goal: Term, program: Program, subst: Substitution | None = None, **opts):
    """Enumerate ``(substitution, proof set)`` pairs for ``goal``."""
    return Solver(program, **opts).solve(goal, subst)


def eval_builtin(call: Compound, s: Substitution | None = None) -> list[Substitution]:
    """Run a builtin on its own; returns every resulting substitution."""
    s = s.copy() if s is not None else Substitution()
    ind = call.indicator
    if ind not in bi.DETERMINISTIC and ind not in bi.NONDETERMINISTIC:
        arities = sorted(a for (n, a) in list(bi.DETERMINISTIC) + list(bi.NONDETERMINISTIC)
                         if n == call.functor)
        if arities:
            raise PrologTypeError(
                f"{call.functor} expects arity {'/'.join(map(str, arities))}, got {len(call.args)}"
            )
        raise UnknownPredicateError(f"{call.functor}/{len(call.args)} is not a builtin")
    fn = bi.DETERMINISTIC.get(ind)
    if fn is not None:
        res = fn(s, *call.args)
        if res is True:
            s.trail.clear()
            return [s]
        if type(res) is tuple:
            # call/N: solving the produced goal needs a program
            raise PrologTypeError("call/N needs a program; use solve()")
        return []
    out = []
    mark = s.mark()
    for _ in bi.NONDETERMINISTIC[ind](s, *call.args):
        snap = s.copy()
        out.append(snap)
        s.undo_to(mark)
    return out


__all__ = ["QueryContext", "Solver", "eval_builtin", "solve", "variant_key"]

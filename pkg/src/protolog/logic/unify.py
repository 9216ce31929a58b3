"""Substitutions and unification."""

from __future__ import annotations

from .terms import Compound, Term, Var


class Substitution:
    """Variable bindings with a trail for cheap undo.

    Bindings are stored in a dict keyed by :class:`Var` identity.  The
    solver mutates one substitution in place and rewinds it with
    :meth:`undo_to`; the functional :func:`unify` works on a copy.
    """

    __slots__ = ("bindings", "trail", "occurs_check")

    def __init__(self, bindings=None, occurs_check: bool = False):
        self.bindings = dict(bindings) if bindings else {}
        self.trail: list[Var] = []
        self.occurs_check = occurs_check

    def copy(self) -> "Substitution":
        return Substitution(self.bindings, self.occurs_check)

    def __len__(self):
        return len(self.bindings)

    def __contains__(self, var):
        return var in self.bindings

    def __repr__(self):
        items = ", ".join(f"{v!r}: {self.resolve(v)!r}" for v in self.bindings)
        return "{" + items + "}"

    def walk(self, t: Term) -> Term:
        """Dereference ``t`` one level (follows variable chains)."""
        b = self.bindings
        while type(t) is Var:
            nxt = b.get(t)
            if nxt is None:
                return t
            t = nxt
        return t

    def resolve(self, t: Term) -> Term:
        """Apply the substitution fully."""
        t = self.walk(t)
        if type(t) is Compound:
            return Compound(t.functor, [self.resolve(a) for a in t.args])
        return t

    def bind(self, var: Var, value: Term) -> None:
        self.bindings[var] = value
        self.trail.append(var)

    def mark(self) -> int:
        return len(self.trail)

    def undo_to(self, mark: int) -> None:
        trail = self.trail
        b = self.bindings
        while len(trail) > mark:
            b.pop(trail.pop(), None)

    def is_ground(self, t: Term) -> bool:
        t = self.walk(t)
        if type(t) is Var:
            return False
        if type(t) is Compound:
            return all(self.is_ground(a) for a in t.args)
        return True

    def occurs(self, var: Var, t: Term) -> bool:
        t = self.walk(t)
        if t is var:
            return True
        if type(t) is Compound:
            return any(self.occurs(var, a) for a in t.args)
        return False

    def unify(self, a: Term, b: Term) -> bool:
        """Unify in place.  On failure the caller must rewind the trail."""
        stack = [(a, b)]
        walk = self.walk
        while stack:
            x, y = stack.pop()
            x = walk(x)
            y = walk(y)
            if x is y:
                continue
            tx = type(x)
            ty = type(y)
            if tx is Var:
                if self.occurs_check and self.occurs(x, y):
                    return False
                self.bind(x, y)
            elif ty is Var:
                if self.occurs_check and self.occurs(y, x):
                    return False
                self.bind(y, x)
            elif tx is Compound:
                if ty is not Compound or x.functor != y.functor or len(x.args) != len(y.args):
                    return False
                stack.extend(zip(x.args, y.args))
            elif x != y:
                return False
        return True


def unify(a: Term, b: Term, subst: Substitution | None = None,
          occurs_check: bool | None = None) -> Substitution | None:
    """Return the most general unifier extending ``subst``, or ``None``.

    The input substitution is never modified.
    """
    s = subst.copy() if subst is not None else Substitution()
    if occurs_check is not None:
        s.occurs_check = occurs_check
    if s.unify(a, b):
        s.trail.clear()
        return s
    return None


def variables(t: Term, acc: list | None = None) -> list[Var]:
    """Distinct variables of ``t`` in order of first occurrence."""
    if acc is None:
        acc = []
    if type(t) is Var:
        if not any(v is t for v in acc):
            acc.append(t)
    elif type(t) is Compound:
        for a in t.args:
            variables(a, acc)
    return acc


def rename(t: Term, mapping: dict, scope: int = 0) -> Term:
    """Copy ``t`` replacing each variable by a fresh one (memoised in ``mapping``)."""
    tt = type(t)
    if tt is Var:
        v = mapping.get(t)
        if v is None:
            v = mapping[t] = Var(t.name, scope)
        return v
    if tt is Compound:
        return Compound(t.functor, [rename(a, mapping, scope) for a in t.args])
    return t

"""Deterministic and nondeterministic builtin predicates.

A builtin receives the solver's substitution and its argument terms.
Deterministic builtins return ``True`` / ``False`` or a tuple of goals to
run next (``call/N``).  Nondeterministic ones return a generator that
yields ``(goals, literals)`` after making its bindings.
"""

from __future__ import annotations

import math
import operator

from .errors import InstantiationError, PrologTypeError
from .terms import Atom, Compound, Float, Int, Term, Var
from .unify import Substitution


def _num(t: Term):
    if type(t) is Int or type(t) is Float:
        return t.value
    return None


def _to_term(v) -> Term:
    if isinstance(v, bool):
        return Int(int(v))
    if isinstance(v, int):
        if not -(2 ** 63) <= v < 2 ** 63:
            raise PrologTypeError("integer overflow outside 64-bit range")
        return Int(v)
    if not math.isfinite(v):
        raise PrologTypeError(f"arithmetic produced non-finite value {v}")
    return Float(v)


def _int_div(a, b):
    if isinstance(a, float) or isinstance(b, float):
        raise PrologTypeError("// expects integers")
    if b == 0:
        raise PrologTypeError("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _div(a, b):
    if b == 0:
        raise PrologTypeError("division by zero")
    if isinstance(a, int) and isinstance(b, int) and a % b == 0:
        return a // b
    return a / b


def _mod(a, b):
    if isinstance(a, float) or isinstance(b, float):
        raise PrologTypeError("mod expects integers")
    if b == 0:
        raise PrologTypeError("mod by zero")
    return a % b


def _pow(a, b):
    if isinstance(a, int) and isinstance(b, int) and b >= 0:
        return a ** b
    return float(a) ** float(b)


_BINARY = {
    "+": operator.add, "-": operator.sub, "*": operator.mul, "/": _div,
    "//": _int_div, "mod": _mod, "**": _pow, "^": _pow,
    "min": min, "max": max,
}
_UNARY = {
    "-": operator.neg, "+": operator.pos, "abs": abs,
    "float": float, "exp": math.exp, "log": math.log, "sqrt": math.sqrt,
    "integer": lambda x: int(round(x)),
}


def eval_arith(t: Term, s: Substitution):
    """Evaluate an arithmetic expression; ints with float contagion."""
    t = s.walk(t)
    tt = type(t)
    if tt is Int or tt is Float:
        return t.value
    if tt is Var:
        raise InstantiationError("arithmetic on an unbound variable")
    if tt is Compound:
        if len(t.args) == 2 and t.functor in _BINARY:
            a = eval_arith(t.args[0], s)
            b = eval_arith(t.args[1], s)
            return _BINARY[t.functor](a, b)
        if len(t.args) == 1 and t.functor in _UNARY:
            return _UNARY[t.functor](eval_arith(t.args[0], s))
    if tt is Atom and t.name in ("pi", "e"):
        return math.pi if t.name == "pi" else math.e
    raise PrologTypeError(f"not an arithmetic expression: {t!r}")


# --- deterministic ------------------------------------------------------


def b_is(s, lhs, rhs):
    return s.unify(lhs, _to_term(eval_arith(rhs, s)))


def _compare(op):
    def fn(s, a, b):
        return op(eval_arith(a, s), eval_arith(b, s))
    return fn


def b_unify(s, a, b):
    return s.unify(a, b)


def b_not_unify(s, a, b):
    mark = s.mark()
    ok = s.unify(a, b)
    s.undo_to(mark)
    return not ok


def _identical(s, a, b) -> bool:
    a = s.walk(a)
    b = s.walk(b)
    if type(a) is Var or type(b) is Var:
        return a is b
    if type(a) is Compound and type(b) is Compound:
        return (
            a.functor == b.functor
            and len(a.args) == len(b.args)
            and all(_identical(s, x, y) for x, y in zip(a.args, b.args))
        )
    return a == b


def b_ground(s, t):
    return s.is_ground(t)


def b_var(s, t):
    return type(s.walk(t)) is Var


def b_nonvar(s, t):
    return type(s.walk(t)) is not Var


def b_number(s, t):
    return type(s.walk(t)) in (Int, Float)


def b_integer(s, t):
    return type(s.walk(t)) is Int


def b_atom(s, t):
    return type(s.walk(t)) is Atom


def b_call(s, goal, *extra):
    goal = s.walk(goal)
    if type(goal) is Var:
        raise InstantiationError("call/N on an unbound goal")
    if type(goal) is Atom:
        return (Compound(goal.name, extra) if extra else Compound(goal.name, ()),)
    if type(goal) is Compound:
        return (Compound(goal.functor, goal.args + tuple(extra)),)
    raise PrologTypeError(f"call/N expects a callable term, got {goal!r}")


DETERMINISTIC = {
    ("true", 0): lambda s: True,
    ("fail", 0): lambda s: False,
    ("false", 0): lambda s: False,
    ("is", 2): b_is,
    ("=", 2): b_unify,
    ("\\=", 2): b_not_unify,
    ("==", 2): lambda s, a, b: _identical(s, a, b),
    ("\\==", 2): lambda s, a, b: not _identical(s, a, b),
    ("<", 2): _compare(operator.lt),
    (">", 2): _compare(operator.gt),
    ("=<", 2): _compare(operator.le),
    (">=", 2): _compare(operator.ge),
    ("=:=", 2): _compare(operator.eq),
    ("=\\=", 2): _compare(operator.ne),
    ("ground", 1): b_ground,
    ("var", 1): b_var,
    ("nonvar", 1): b_nonvar,
    ("number", 1): b_number,
    ("integer", 1): b_integer,
    ("atom", 1): b_atom,
}
for _n in range(1, 8):
    DETERMINISTIC[("call", _n)] = b_call


# --- nondeterministic ---------------------------------------------------


def b_between(s, lo, hi, x):
    lo_v = s.walk(lo)
    hi_v = s.walk(hi)
    if type(lo_v) is Var or type(hi_v) is Var:
        raise InstantiationError("between/3 needs bound limits")
    if type(lo_v) is not Int or type(hi_v) is not Int:
        raise PrologTypeError("between/3 expects integer limits")
    xv = s.walk(x)
    if type(xv) is Int:
        if lo_v.value <= xv.value <= hi_v.value:
            yield (), ()
        return
    if type(xv) is not Var:
        raise PrologTypeError("between/3 expects an integer or variable")
    for i in range(lo_v.value, hi_v.value + 1):
        s.bind(xv, Int(i))
        yield (), ()


NONDETERMINISTIC = {
    ("between", 3): b_between,
}


def is_builtin(indicator) -> bool:
    return indicator in DETERMINISTIC or indicator in NONDETERMINISTIC

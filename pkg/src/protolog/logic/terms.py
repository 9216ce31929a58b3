"""Term representation for the logic language.

Variables are identity-hashed objects; every other term compares
structurally.  Lists are ordinary compounds built from ``'.'/2`` and the
atom ``[]``.
"""

from __future__ import annotations

import itertools
import re

_scope_counter = itertools.count(1)


def fresh_scope() -> int:
    return next(_scope_counter)


class Term:
    __slots__ = ()


class Var(Term):
    __slots__ = ("name", "scope")

    def __init__(self, name: str = "_", scope: int = 0):
        self.name = name
        self.scope = scope

    def __repr__(self):
        if self.scope:
            return f"_{self.name}_{self.scope}"
        return self.name


class Atom(Term):
    __slots__ = ("name", "_hash")

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("atom", name))

    def __eq__(self, other):
        return type(other) is Atom and other.name == self.name

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return format_term(self)


class Int(Term):
    __slots__ = ("value",)

    def __init__(self, value: int):
        self.value = int(value)

    def __eq__(self, other):
        return type(other) is Int and other.value == self.value

    def __hash__(self):
        return hash(("int", self.value))

    def __repr__(self):
        return str(self.value)


class Float(Term):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def __eq__(self, other):
        return type(other) is Float and other.value == self.value

    def __hash__(self):
        return hash(("float", self.value))

    def __repr__(self):
        return format_term(self)


class Compound(Term):
    __slots__ = ("functor", "args", "_hash")

    def __init__(self, functor: str, args):
        self.functor = functor
        self.args = tuple(args)
        self._hash = None

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def indicator(self) -> tuple[str, int]:
        return (self.functor, len(self.args))

    def __eq__(self, other):
        return (
            type(other) is Compound
            and other.functor == self.functor
            and other.args == self.args
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.functor, self.args))
        return self._hash

    def __repr__(self):
        return format_term(self)


class TensorRef(Term):
    """Opaque handle to a tensor.

    ``key`` is a hashable recipe describing how the tensor is produced
    (an input image, an encoding, a prototype sample, a decoding).  Two
    refs unify only when their keys are identical.
    """

    __slots__ = ("key", "kind")

    def __init__(self, key, kind: str = "image"):
        self.key = key
        self.kind = kind

    def __eq__(self, other):
        return type(other) is TensorRef and other.key == self.key

    def __hash__(self):
        return hash(("tensor", self.key))

    def __repr__(self):
        return format_term(self)


class Prob(Term):
    """A probability value produced by a neural builtin.

    The value is ``const * prod(factors)`` where each factor is a recipe
    evaluated later by the neural evaluator.  Keeping it symbolic lets
    proofs be derived once and re-evaluated with fresh parameters.
    """

    __slots__ = ("const", "factors")

    def __init__(self, const: float = 1.0, factors: tuple = ()):
        self.const = float(const)
        self.factors = tuple(factors)

    def __eq__(self, other):
        return (
            type(other) is Prob
            and other.const == self.const
            and other.factors == self.factors
        )

    def __hash__(self):
        return hash(("prob", self.const, self.factors))

    def __repr__(self):
        return format_term(self)


NIL = Atom("[]")
TRUE = Atom("true")


def make_list(items, tail: Term = NIL) -> Term:
    out = tail
    for item in reversed(list(items)):
        out = Compound(".", (item, out))
    return out


def is_list_cell(t: Term) -> bool:
    return type(t) is Compound and t.functor == "." and len(t.args) == 2


def is_callable(t: Term) -> bool:
    return type(t) in (Atom, Compound)


# --- printing -----------------------------------------------------------

_PLAIN_ATOM = re.compile(r"^[a-z][A-Za-z0-9_]*$")
_SYMBOL_ATOM = re.compile(r"^[+\-*/\\^<>=~:.?@#&$]+$")

INFIX_OPS = {
    ":-": 1200, ";": 1100, ",": 1000, "::": 1050,
    "is": 700, "=": 700, "\\=": 700, "==": 700, "\\==": 700,
    "<": 700, ">": 700, "=<": 700, ">=": 700, "=:=": 700, "=\\=": 700,
    "+": 500, "-": 500, "*": 400, "/": 400, "//": 400, "mod": 400,
    "**": 200, "^": 200,
}


def format_atom(name: str) -> str:
    if _PLAIN_ATOM.match(name) or name in ("[]", "!", ";", ","):
        return name if name != "," else "','"
    if _SYMBOL_ATOM.match(name):
        return name
    escaped = name.replace("\\", "\\\\").replace("'", "\\'")
    return f"'{escaped}'"


def format_term(t: Term, subst=None) -> str:
    """Render a term in canonical source syntax."""
    if subst is not None:
        t = subst.resolve(t)
    return _fmt(t, 1200)


def _fmt(t: Term, max_prec: int) -> str:
    tt = type(t)
    if tt is Var:
        return repr(t)
    if tt is Atom:
        return format_atom(t.name)
    if tt is Int:
        return str(t.value)
    if tt is Float:
        return repr(t.value)
    if tt is TensorRef:
        return f"<tensor {_fmt_key(t.key)}>"
    if tt is Prob:
        if not t.factors:
            return repr(t.const)
        return f"<prob {t.const!r}*{'*'.join(_fmt_key(f) for f in t.factors)}>"
    if is_list_cell(t):
        items = []
        while is_list_cell(t):
            items.append(_fmt(t.args[0], 999))
            t = t.args[1]
        body = ",".join(items)
        if t == NIL:
            return f"[{body}]"
        return f"[{body}|{_fmt(t, 999)}]"
    if len(t.args) == 2 and t.functor in INFIX_OPS:
        prec = INFIX_OPS[t.functor]
        left = _fmt(t.args[0], prec - 1)
        right = _fmt(t.args[1], prec if t.functor in (",", ";", "^") else prec - 1)
        op = t.functor
        if op == ",":
            s = f"{left}, {right}"
        elif op.isalpha() or op in (":-", "::", ";", "is"):
            s = f"{left} {op} {right}"
        else:
            s = f"{left}{op}{right}"
        return f"({s})" if prec > max_prec else s
    if len(t.args) == 1 and t.functor == "-" and type(t.args[0]) not in (Int, Float):
        return f"-({_fmt(t.args[0], 1200)})"
    args = ",".join(_fmt(a, 999) for a in t.args)
    return f"{format_atom(t.functor)}({args})"


def _fmt_key(key) -> str:
    if isinstance(key, tuple):
        return key[0] + "(" + ",".join(_fmt_key(k) for k in key[1:]) + ")"
    return str(key)

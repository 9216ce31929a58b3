"""Tokenizer and operator-precedence parser for the ProbLog subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .terms import NIL, Atom, Compound, Float, Int, Term, Var, make_list


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.message = message
        self.line = line
        self.col = col


# name -> (priority, type)
PREFIX_OPS = {"-": (200, "fy"), "+": (200, "fy"), "\\+": (900, "fy"), ":-": (1200, "fx")}
INFIX_OPS = {
    ":-": (1200, "xfx"),
    ";": (1100, "xfy"),
    "::": (1050, "xfx"),
    ",": (1000, "xfy"),
    "is": (700, "xfx"), "=": (700, "xfx"), "\\=": (700, "xfx"),
    "==": (700, "xfx"), "\\==": (700, "xfx"),
    "<": (700, "xfx"), ">": (700, "xfx"), "=<": (700, "xfx"), ">=": (700, "xfx"),
    "=:=": (700, "xfx"), "=\\=": (700, "xfx"),
    "+": (500, "yfx"), "-": (500, "yfx"),
    "*": (400, "yfx"), "/": (400, "yfx"), "//": (400, "yfx"), "mod": (400, "yfx"),
    "**": (200, "xfx"), "^": (200, "xfy"),
}


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|%[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<tensorlit>\#[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<qatom>'(?:[^'\\]|\\.)*')
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<punct>[()\[\]{},|])
  | (?P<symbol>[+\-*/\\^<>=~:.?@#&$]+)
  | (?P<bang>[!;])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # name, var, int, float, string, punct, end, tensorlit, eof
    value: str
    line: int
    col: int
    # whitespace immediately precedes this token
    layout_before: bool = False


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    layout = True
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        end = m.end()
        if kind == "ws":
            layout = True
        elif kind == "symbol" and value == "." and (end >= n or text[end] in " \t\r\n%"):
            tokens.append(Token("end", ".", line, col, layout))
            layout = False
        elif kind == "symbol" and value.endswith(".") and (end >= n or text[end] in " \t\r\n%") and len(value) > 1:
            # e.g. "=." is never valid here, split off the terminator
            tokens.append(Token("name", value[:-1], line, col, layout))
            tokens.append(Token("end", ".", line, col + len(value) - 1, False))
            layout = False
        else:
            if kind in ("symbol", "bang"):
                kind = "name"
            elif kind == "qatom":
                kind = "qname"
                value = _unescape(value[1:-1])
            elif kind == "string":
                value = _unescape(value[1:-1])
            tokens.append(Token(kind, value, line, col, layout))
            layout = False
        raw = m.group()
        if "\n" in raw:
            line += raw.count("\n")
            line_start = pos + raw.rfind("\n") + 1
        pos = end
    tokens.append(Token("eof", "", line, n - line_start + 1, True))
    return tokens


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), s)


class _Parser:
    def __init__(self, tokens: list[Token], tensor_loader=None):
        self.toks = tokens
        self.i = 0
        self.varmap: dict[str, Var] = {}
        self.tensor_loader = tensor_loader

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def expect(self, kind: str, value: str | None = None) -> Token:
        t = self.next()
        if t.kind != kind or (value is not None and t.value != value):
            want = value or kind
            got = t.value or t.kind
            raise ParseError(f"expected {want!r}, found {got!r}", t.line, t.col)
        return t

    # clause level -------------------------------------------------------

    def clause(self) -> tuple[Term, Token]:
        self.varmap = {}
        start = self.peek()
        t = self.parse(1200)
        self.expect("end")
        return t, start

    # expression level ---------------------------------------------------

    def _is_term_start(self, tok: Token) -> bool:
        if tok.kind in ("eof", "end"):
            return False
        if tok.kind == "punct":
            return tok.value in "([{"
        if tok.kind == "name" and tok.value in INFIX_OPS and tok.value not in PREFIX_OPS:
            return False
        return True

    def parse(self, max_prec: int) -> Term:
        left, left_prec = self.primary(max_prec)
        return self.infix(left, left_prec, max_prec)

    def infix(self, left: Term, left_prec: int, max_prec: int) -> Term:
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == ",":
                name = ","
            elif tok.kind == "punct" and tok.value == "|":
                name = ";"
            elif tok.kind == "name":
                name = tok.value
            else:
                break
            op = INFIX_OPS.get(name)
            if op is None:
                break
            prec, typ = op
            if prec > max_prec:
                break
            la = prec - 1 if typ[0] == "x" else prec
            ra = prec - 1 if typ[2] == "x" else prec
            if left_prec > la:
                break
            self.next()
            right = self.parse(ra)
            left = Compound(name, (left, right))
            left_prec = prec
        return left

    def primary(self, max_prec: int) -> tuple[Term, int]:
        tok = self.next()
        k = tok.kind
        if k == "int":
            return Int(int(tok.value)), 0
        if k == "float":
            return Float(float(tok.value)), 0
        if k == "var":
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.value == "(" and not nxt.layout_before:
                self.error(f"variable {tok.value} in functor position", tok)
            if tok.value == "_":
                return Var("_"), 0
            v = self.varmap.get(tok.value)
            if v is None:
                v = self.varmap[tok.value] = Var(tok.value)
            return v, 0
        if k == "string":
            return Atom(tok.value), 0
        if k == "tensorlit":
            return self.tensor_literal(tok), 0
        if k == "punct":
            if tok.value == "(":
                t = self.parse(1200)
                self.expect("punct", ")")
                return t, 0
            if tok.value == "[":
                return self.list_items(), 0
            if tok.value == "{":
                t = self.parse(1200)
                self.expect("punct", "}")
                return Compound("{}", (t,)), 0
            self.error(f"unexpected {tok.value!r}", tok)
        if k in ("name", "qname"):
            name = tok.value
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.value == "(" and not nxt.layout_before:
                self.next()
                args = [self.parse(999)]
                while self.peek().kind == "punct" and self.peek().value == ",":
                    self.next()
                    args.append(self.parse(999))
                self.expect("punct", ")")
                return Compound(name, args), 0
            if k == "name" and name == "-" and nxt.kind in ("int", "float") and not nxt.layout_before:
                self.next()
                if nxt.kind == "int":
                    return Int(-int(nxt.value)), 0
                return Float(-float(nxt.value)), 0
            if k == "name" and name in PREFIX_OPS and self._is_term_start(nxt):
                prec, typ = PREFIX_OPS[name]
                if prec > max_prec:
                    prec = 999
                arg_max = prec - 1 if typ == "fx" else prec
                arg = self.parse(arg_max)
                return Compound(name, (arg,)), prec
            if k == "name" and (name in INFIX_OPS or name in PREFIX_OPS):
                prio = max(INFIX_OPS.get(name, (0,))[0], PREFIX_OPS.get(name, (0,))[0])
                return Atom(name), prio if prio <= max_prec else 0
            return Atom(name), 0
        if k == "end":
            self.error("unexpected end of clause", tok)
        self.error("unexpected end of input", tok)

    def list_items(self) -> Term:
        if self.peek().kind == "punct" and self.peek().value == "]":
            self.next()
            return NIL
        items = [self.parse(999)]
        tail: Term = NIL
        while True:
            t = self.next()
            if t.kind == "punct" and t.value == ",":
                items.append(self.parse(999))
            elif t.kind == "punct" and t.value == "|":
                tail = self.parse(999)
                self.expect("punct", "]")
                break
            elif t.kind == "punct" and t.value == "]":
                break
            else:
                self.error(f"expected ',' '|' or ']' in list, found {t.value!r}", t)
        return make_list(items, tail)

    def tensor_literal(self, tok: Token) -> Term:
        kind = tok.value[1:]
        self.expect("punct", "(")
        arg = self.next()
        if arg.kind not in ("string", "qname"):
            self.error("tensor literal expects a quoted path", arg)
        self.expect("punct", ")")
        if self.tensor_loader is None:
            return Compound("$tensor", (Atom(kind), Atom(arg.value)))
        return self.tensor_loader(kind, arg.value)


def parse_terms(text: str, tensor_loader=None) -> list[tuple[Term, int, int]]:
    """Parse ``text`` into clause terms with their start line/column."""
    p = _Parser(tokenize(text), tensor_loader)
    out = []
    while p.peek().kind != "eof":
        t, start = p.clause()
        out.append((t, start.line, start.col))
    return out


def parse_term(text: str, tensor_loader=None) -> tuple[Term, dict[str, Var]]:
    """Parse a single term (a trailing ``.`` is optional).

    Returns the term and the mapping of source variable names.
    """
    toks = tokenize(text)
    if toks[-2].kind != "end" if len(toks) >= 2 else True:
        eof = toks.pop()
        toks.append(Token("end", ".", eof.line, eof.col))
        toks.append(eof)
    p = _Parser(toks, tensor_loader)
    t, _ = p.clause()
    if p.peek().kind != "eof":
        p.error("trailing input after term")
    return t, dict(p.varmap)

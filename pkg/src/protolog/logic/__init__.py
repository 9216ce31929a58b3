"""Parser, unification and SLD resolution for the logic language."""

from .errors import (
    InstantiationError, LogicError, ModeError, PrologTypeError, ResourceError,
    UnknownPredicateError,
)
from .parser import ParseError, parse_term, parse_terms
from .program import (
    AnnotatedDisjunction, Clause, NeuralDecl, Program, ProgramError, parse_program,
)
from .solver import QueryContext, Solver, eval_builtin, solve
from .terms import Atom, Compound, Float, Int, Prob, TensorRef, Var, format_term, make_list
from .unify import Substitution, unify

__all__ = [
    "AnnotatedDisjunction", "Atom", "Clause", "Compound", "Float", "InstantiationError", "Int",
    "LogicError", "ModeError", "NeuralDecl", "ParseError", "Prob", "Program", "ProgramError",
    "PrologTypeError", "QueryContext", "ResourceError", "Solver", "Substitution", "TensorRef",
    "UnknownPredicateError", "Var", "eval_builtin", "format_term", "make_list", "parse_program",
    "parse_term", "parse_terms", "solve", "unify",
]

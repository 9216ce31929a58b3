"""Choice literals and proof sets."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..logic.terms import Term


class ContractError(ValueError):
    """Raised when a proof set violates its consistency contract."""


@dataclass(frozen=True)
class ChoiceLiteral:
    """One head choice of one ground annotated disjunction.

    Identity is ``(key, head)``; ``prob`` is a float for static facts, a
    symbolic :class:`~protolog.logic.terms.Prob` for neural ones, or a
    differentiable tensor when built by hand.
    """

    key: tuple
    head: int
    prob: object = field(compare=False, hash=False)
    atom: Term | None = field(default=None, compare=False, hash=False)

    @property
    def var(self):
        return self.key

    def __repr__(self):
        atom = f" {self.atom!r}" if self.atom is not None else ""
        return f"<choice {self.key!r}#{self.head}{atom}>"


class ProofSet(frozenset):
    """A consistent set of choice literals supporting one derivation."""

    def __new__(cls, literals=()):
        self = super().__new__(cls, literals)
        check_consistent(self)
        return self

    def choices(self) -> dict:
        return {lit.key: lit.head for lit in self}


def check_consistent(literals) -> None:
    seen: dict = {}
    for lit in literals:
        prev = seen.setdefault(lit.key, lit.head)
        if prev != lit.head:
            raise ContractError(
                f"proof chooses heads {prev} and {lit.head} of the same disjunction {lit.key!r}"
            )

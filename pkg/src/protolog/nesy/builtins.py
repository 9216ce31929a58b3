"""Neural builtins as seen by the solver.

Builtins never touch numbers.  They bind tensor handles whose keys are
recipes (``('enc', image_key)``, ``('sample', j)``, ``('dec', latent_key)``)
and produce :class:`Prob` terms whose factors name the quantities to
compute later: ``('member', j, latent_key)`` for prototype membership
and ``('sim', a, b)`` for image similarity.  Proofs can therefore be
derived once and re-evaluated with any parameters.
"""

from __future__ import annotations

from ..logic.errors import InstantiationError, ModeError, PrologTypeError, UnknownPredicateError
from ..logic.program import NeuralDecl
from ..logic.terms import Compound, Float, Int, Prob, TensorRef, Var, fresh_scope
from ..logic.unify import rename
from ..prob.proofs import ChoiceLiteral

LATENT_HEADS = ("enc", "sample")


def is_latent_key(key) -> bool:
    return key[0] in LATENT_HEADS


class NeuralBackend:
    """Registry of neural builtins and networks for one label table."""

    def __init__(self, labels):
        self.labels = list(labels)
        self._label_pos = {self._label_term_key(v): i for i, v in enumerate(self.labels)}
        self._builtins = {
            ("nn_encoder", 2): self._encoder,
            ("nn_decoder", 2): self._decoder,
            ("sample", 2): self._sample,
            ("likelihood", 3): self._likelihood,
            ("mse", 3): self._similarity,
            ("mul", 3): self._mul,
        }
        self.networks = {"encoder": self._net_encoder, "decoder": self._net_decoder}

    @staticmethod
    def _label_term_key(v):
        return float(v)

    def builtin(self, indicator):
        return self._builtins.get(indicator)

    def has_network(self, name: str) -> bool:
        return name in self.networks

    # helpers ------------------------------------------------------------

    def prototype_index(self, t) -> int:
        """Prototype row for ``tensor(prototype(L))``, ``prototype(L)`` or a label ``L``."""
        while type(t) is Compound and t.functor in ("tensor", "prototype") and len(t.args) == 1:
            t = t.args[0]
        if type(t) is Var:
            raise ModeError("prototype is unbound: cannot sample or score against it")
        if type(t) not in (Int, Float):
            raise PrologTypeError(f"not a prototype reference: {t!r}")
        pos = self._label_pos.get(float(t.value))
        if pos is None:
            raise PrologTypeError(f"no prototype for label {t.value}")
        return pos

    @staticmethod
    def _tensor(t, what: str, kind: str | None = None) -> TensorRef:
        if type(t) is Var:
            raise ModeError(f"{what} is unbound")
        if type(t) is not TensorRef:
            raise PrologTypeError(f"{what} must be a tensor, got {t!r}")
        if kind is not None and t.kind != kind:
            raise PrologTypeError(f"{what} must be a {kind} tensor, got a {t.kind} tensor")
        return t

    @staticmethod
    def _prob(t, what: str) -> Prob:
        if type(t) is Var:
            raise InstantiationError(f"{what} is unbound")
        if type(t) in (Int, Float):
            return Prob(float(t.value))
        if type(t) is Prob:
            return t
        raise PrologTypeError(f"{what} must be a probability, got {t!r}")

    # builtins: handler(s, ctx, *args) -> bool -------------------------------

    def _encoder(self, s, ctx, image, latent):
        ref = self._tensor(s.walk(image), "encoder input", "image")
        return s.unify(latent, TensorRef(("enc", ref.key), "latent"))

    def _decoder(self, s, ctx, latent, image):
        ref = self._tensor(s.walk(latent), "decoder input", "latent")
        return s.unify(image, TensorRef(("dec", ref.key), "image"))

    def _sample(self, s, ctx, prot, out):
        j = self.prototype_index(s.resolve(prot))
        return s.unify(out, TensorRef(("sample", j), "latent"))

    def _likelihood(self, s, ctx, prot, latent, p):
        j = self.prototype_index(s.resolve(prot))
        ref = self._tensor(s.walk(latent), "likelihood latent", "latent")
        return s.unify(p, Prob(1.0, (("member", j, ref.key),)))

    def _similarity(self, s, ctx, a, b, p):
        ra = self._tensor(s.walk(a), "first image", "image")
        rb = self._tensor(s.walk(b), "second image", "image")
        pair = sorted((ra.key, rb.key), key=repr)
        return s.unify(p, Prob(1.0, (("sim", pair[0], pair[1]),)))

    def _mul(self, s, ctx, a, b, out):
        pa = self._prob(s.walk(a), "first factor")
        pb = self._prob(s.walk(b), "second factor")
        res = Prob(pa.const * pb.const, pa.factors + pb.factors)
        if not res.factors:
            res = Float(res.const)
        return s.unify(out, res)

    # networks named in nn(...) declarations --------------------------------

    def _net_encoder(self, inputs):
        ref = self._tensor(inputs[0], "encoder input", "image")
        return TensorRef(("enc", ref.key), "latent")

    def _net_decoder(self, inputs):
        ref = self._tensor(inputs[0], "decoder input", "latent")
        return TensorRef(("dec", ref.key), "image")

    def resolve_decl(self, decl: NeuralDecl, goal: Compound, s, ctx):
        """Resolve ``goal`` against a neural declaration.

        The functional form ``nn(net, [In], Out)`` binds ``Out`` to the
        network applied to ``In``.  The classifier form
        ``nn(net, [In], Out, Domain)`` is an annotated disjunction over
        ``Domain`` scored by prototype membership of the encoded input;
        like any feed-forward classifier it needs a ground input and has
        no solutions otherwise.
        """
        if decl.domain is None and decl.net not in self.networks:
            raise UnknownPredicateError(f"unregistered network {decl.net!r}")
        mapping: dict = {}
        scope = fresh_scope()
        head = rename(decl.head, mapping, scope)
        mark = s.mark()
        if not s.unify(goal, head):
            s.undo_to(mark)
            return
        inputs = [s.resolve(rename(t, mapping, scope)) for t in decl.inputs]
        output = rename(decl.output, mapping, scope)
        if decl.domain is None:
            if s.unify(output, self.networks[decl.net](inputs)):
                yield (), ()
            return
        x = inputs[0]
        s.undo_to(mark)
        if type(x) is not TensorRef or not s.is_ground(x):
            return
        latent = ("enc", x.key)
        key = ("nn", decl.net, x.key)
        for i, value in enumerate(decl.domain):
            if i >= len(self.labels):
                break
            # the solver undoes to its choicepoint before resuming us, so
            # the head bindings are redone for every value
            m = s.mark()
            if s.unify(goal, head) and s.unify(output, value):
                lit = ctx.literals.get((key, i))
                if lit is None:
                    lit = ChoiceLiteral(key, i, Prob(1.0, (("member", i, latent),)),
                                        Compound(decl.head.functor, (x, value)))
                    ctx.literals[(key, i)] = lit
                yield (), (lit,)
            s.undo_to(m)


__all__ = ["NeuralBackend", "is_latent_key"]


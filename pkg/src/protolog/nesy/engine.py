"""Query engine over a program with prototype-backed neural predicates."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..glyphs import read_pgm
from ..logic.errors import ModeError
from ..logic.parser import parse_term
from ..logic.program import Clause, Program, ProgramError, parse_program, replace_predicate
from ..logic.solver import QueryContext, Solver
from ..logic.terms import Compound, Float, Int, Prob, TensorRef, Term, Var
from ..logic.unify import variables
from ..prob.circuit import compile_proofs, evaluate_circuits
from ..prob.engine import collect_solutions
from ..tensor import autodiff as ad
from .builtins import NeuralBackend
from .evaluator import QueryEnv, RecipeEvaluator

PROGRAMS = ("reference", "didactic")


def program_text(name: str = "reference") -> str:
    """Source of a shipped program by name, or of a program file by path."""
    if name in PROGRAMS:
        return resources.files("protolog.programs").joinpath(f"{name}.pl").read_text(encoding="utf-8")
    if os.path.isfile(name):
        with open(name, encoding="utf-8") as f:
            return f.read()
    raise ValueError(f"no shipped program or file named {name!r} (shipped: {', '.join(PROGRAMS)})")


def load_program(name: str = "reference", mode: str = "training") -> Program:
    prog = parse_program(program_text(name), mode="training")
    return transform_for_inference(prog) if mode == "inference" else prog


def _inference_decode() -> Clause:
    prot, image = Var("Prot"), Var("Image")
    return Clause(Compound("decode", (prot, image, Float(1.0))), (Compound("ground", (prot,)),))


def transform_for_inference(program: Program) -> Program:
    """Replace ``decode/3`` by the reconstruction-free inference clause."""
    if not program.defines(("decode", 3)):
        raise ProgramError("decode/3 is not defined; nothing to substitute")
    return replace_predicate(program, ("decode", 3), [_inference_decode()], mode="inference")


# --- compiled queries ----------------------------------------------------------


@dataclass
class CompiledQuery:
    """Answers of one goal with their circuits, independent of parameter values."""

    goal: Term
    names: dict
    bindings: list
    circuits: list
    literals: list
    lit_rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.bindings)


def compile_goal(solver: Solver, goal: Term, names: dict, ctx: QueryContext | None = None) -> CompiledQuery:
    ctx = ctx or QueryContext()
    groups = collect_solutions(solver, goal, names, ctx)
    literals: list = []
    pos: dict = {}
    bindings, circuits, rows = [], [], []
    for binding, proofs in groups:
        c = compile_proofs(proofs)
        r = []
        for lit in c.literals:
            k = (lit.key, lit.head)
            if k not in pos:
                pos[k] = len(literals)
                literals.append(lit)
            r.append(pos[k])
        bindings.append(binding)
        circuits.append(c)
        rows.append(np.array(r, dtype=np.intp))
    return CompiledQuery(goal, names, bindings, circuits, literals, rows)


def evaluate_compiled(model, queries, envs) -> tuple[ad.Tensor, list, RecipeEvaluator]:
    """Probabilities of every answer of every compiled query.

    Returns the flat probability vector, per-query slices into it, and the
    evaluator (for reading generated tensors).
    """
    ev = RecipeEvaluator(model, envs)
    entries = []
    base = []
    for q, cq in enumerate(queries):
        base.append(len(entries))
        entries.extend((q, lit.prob) for lit in cq.literals)
    leaf = ev.literal_probs(entries) if entries else ad.Tensor(np.zeros(0))
    order, offsets, circuits, slices = [], [], [], []
    n = 0
    for q, cq in enumerate(queries):
        start = len(circuits)
        for c, r in zip(cq.circuits, cq.lit_rows):
            offsets.append(n)
            n += len(r)
            order.append(r + base[q])
            circuits.append(c)
        slices.append(slice(start, len(circuits)))
    if not circuits:
        return ad.Tensor(np.zeros(0)), slices, ev
    idx = np.concatenate(order) if order else np.zeros(0, dtype=np.intp)
    arranged = ad.take_rows(leaf, idx) if idx.size else leaf
    return evaluate_circuits(circuits, arranged, offsets), slices, ev


# --- engine ----------------------------------------------------------------------


@dataclass
class NesyAnswer:
    substitution: dict
    probability: float
    proofs: list
    tensors: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.probability


class Engine:
    """Answers goals against ``program`` using ``model`` for neural predicates.

    Every query draws prototype noise from its own stream, seeded by the
    engine seed and a running query counter.
    """

    def __init__(self, program: Program, model, seed: int = 0, *, memo: str = "ad",
                 depth_limit: int = 10_000, occurs_check: bool = False):
        self.program = program
        self.model = model
        self.seed = int(seed)
        self.counter = 0
        self.images: dict = {}
        self.backend = NeuralBackend(model.labels)
        self.solver = Solver(program, neural=self.backend, memo=memo, depth_limit=depth_limit,
                             occurs_check=occurs_check)
        self._opts = dict(memo=memo, depth_limit=depth_limit, occurs_check=occurs_check)

    # images -------------------------------------------------------------

    def add_image(self, array) -> TensorRef:
        key = ("img", len(self.images))
        self.images[key] = np.asarray(array, dtype=np.float64)
        return TensorRef(key, "image")

    def tensor_loader(self, kind: str, path: str) -> TensorRef:
        if kind != "img":
            raise ValueError(f"unsupported tensor literal #{kind}")
        return self.add_image(read_pgm(path))

    def parse_goal(self, text: str) -> tuple[Term, dict]:
        term, names = parse_term(text, tensor_loader=self.tensor_loader)
        return term, {n: v for n, v in names.items() if not n.startswith("_")}

    def next_env(self) -> QueryEnv:
        env = QueryEnv(self.images, (self.seed, self.counter))
        self.counter += 1
        return env

    # queries ------------------------------------------------------------

    def compile(self, goal: Term, names: dict, prune: float | None = None,
                env: QueryEnv | None = None) -> CompiledQuery:
        """Derive all answers of ``goal``.

        With ``prune`` set, choices whose probability falls below the
        threshold are dropped during search; their values are computed
        with ``env``.
        """
        if prune is None:
            return compile_goal(self.solver, goal, names)
        ev = RecipeEvaluator(self.model, [env])
        values: dict = {}

        def keep(lit, ctx):
            k = (lit.key, lit.head)
            v = values.get(k)
            if v is None:
                v = values[k] = float(ev.literal_probs([(0, lit.prob)]).data[0])
            return v >= prune

        solver = Solver(self.program, neural=self.backend, literal_filter=keep, **self._opts)
        return compile_goal(solver, goal, names)

    def answer(self, goal, names: dict | None = None, *, prune: float | None = None,
               memo: str | None = None) -> list[NesyAnswer]:
        """All answers, most probable first (ties keep derivation order)."""
        if isinstance(goal, str):
            goal, names = self.parse_goal(goal)
        elif names is None:
            names = {v.name: v for v in variables(goal) if not v.name.startswith("_")}
        env = self.next_env()
        if memo is not None and memo != self._opts["memo"]:
            other = Engine(self.program, self.model, self.seed, **{**self._opts, "memo": memo})
            other.images = self.images
            return other._answer(goal, names, env, prune)
        return self._answer(goal, names, env, prune)

    def _answer(self, goal, names, env, prune):
        cq = self.compile(goal, names, prune=prune, env=env)
        probs, _, ev = evaluate_compiled(self.model, [cq], [env])
        out = []
        for i, binding in enumerate(cq.bindings):
            tensors = {}
            for t in binding.values():
                for ref in tensor_refs(t):
                    if ref.key not in tensors:
                        tensors[ref.key] = ev.value(0, ref.key)
            out.append(NesyAnswer(binding, float(probs.data[i]), cq.circuits[i], tensors))
        order = sorted(range(len(out)), key=lambda i: -out[i].probability)
        return [out[i] for i in order]

    def probability_of(self, term: Term, env: QueryEnv | None = None) -> float:
        """Numeric value of a probability term produced by a neural builtin."""
        if type(term) in (Int, Float):
            return float(term.value)
        if type(term) is not Prob:
            raise TypeError(f"not a probability term: {term!r}")
        ev = RecipeEvaluator(self.model, [env or QueryEnv(self.images, (self.seed, self.counter))])
        return float(ev.literal_probs([(0, term)]).data[0])


def tensor_refs(t: Term):
    if type(t) is TensorRef:
        yield t
    elif type(t) is Compound:
        for a in t.args:
            yield from tensor_refs(a)


# --- canonical operations ---------------------------------------------------------


def _image_term(engine: Engine, image) -> Term:
    if image is None:
        return Var("Image")
    if isinstance(image, Term):
        return image
    return engine.add_image(image)


def answer_canonical(engine: Engine, image=None, digit=None) -> list[NesyAnswer]:
    """Any of the four ``digit(I, D)`` modes; ``None`` leaves an argument free."""
    i = _image_term(engine, image)
    d = Var("D") if digit is None else Int(int(digit))
    names = {}
    if type(i) is Var:
        names["I"] = i
    if type(d) is Var:
        names["D"] = d
    return engine.answer(Compound("digit", (i, d)), names)


def neural_ad_probabilities(engine: Engine, image=None) -> tuple[list, list]:
    """Per-prototype head probabilities of the digit disjunction.

    Returns ``(probabilities, images)`` indexed by prototype; ``images``
    holds the image each head is bound to (the input for a ground query,
    a generated image otherwise).
    """
    term = _image_term(engine, image)
    answers = answer_canonical(engine, term)
    k = engine.model.num_prototypes
    probs = [0.0] * k
    imgs: list = [None] * k
    for a in answers:
        j = engine.model.label_index(a.substitution["D"].value)
        probs[j] = a.probability
        imgs[j] = a.substitution.get("I", term)
    return probs, imgs


def _run_probability_goal(engine: Engine, goal: Compound, names: dict):
    env = engine.next_env()
    for s, _ in engine.solver.solve(goal):
        bind = {n: s.resolve(v) for n, v in names.items()}
        return bind, engine.probability_of(bind["P"], env)
    return None, 0.0


def encode_goal(engine: Engine, image, label):
    """Resolve ``encode(Image, tensor(prototype(label)), P)``.

    Returns ``(bindings, probability)``.  An unbound image is generated
    from the prototype.  Leaving both unbound is a mode error.
    """
    img = _image_term(engine, image)
    if label is None:
        if type(img) is Var:
            raise ModeError("encode/3 needs a ground image or a ground prototype")
        prot = Var("Prot")
    else:
        prot = Compound("tensor", (Compound("prototype", (Int(int(label)),)),))
    p = Var("P")
    names = {"P": p}
    if type(img) is Var:
        names["Image"] = img
    return _run_probability_goal(engine, Compound("encode", (img, prot, p)), names)


def decode_goal(engine: Engine, label, image):
    """Resolve ``decode(tensor(prototype(label)), Image, P)``."""
    if label is None:
        raise ModeError("decode/3 needs a ground prototype")
    prot = Compound("tensor", (Compound("prototype", (Int(int(label)),)),))
    img = _image_term(engine, image)
    p = Var("P")
    names = {"P": p}
    if type(img) is Var:
        names["Image"] = img
    return _run_probability_goal(engine, Compound("decode", (prot, img, p)), names)


def im_similar(a, b) -> ad.Tensor:
    """``1 - mean((a - b)^2)`` clamped to ``[0, 1]``."""
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return ad.clamp(1.0 - ad.mse(a, b), 0.0, 1.0)


__all__ = [
    "CompiledQuery", "Engine", "NesyAnswer", "answer_canonical", "compile_goal", "decode_goal",
    "encode_goal", "evaluate_compiled", "im_similar", "load_program", "neural_ad_probabilities",
    "program_text", "tensor_refs", "transform_for_inference",
]

"""Evaluation tasks: classification, addition, and generation quality."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import glyphs
from .glyphs import GlyphDataset
from .logic.terms import Compound, Int, TensorRef, Var, make_list
from .logic.unify import variables
from .model import Model
from .nesy.engine import Engine, compile_goal, evaluate_compiled, load_program
from .nesy.evaluator import QueryEnv
from .training import TemplateCache, placeholder

TASKS = ("digit", "add", "gen_digit", "gen_add", "multi_add")
EVAL_STREAM = 2
MULTI_PRUNE = 0.01


@dataclass
class EvalReport:
    task: str
    metric: str
    value: float
    n: int
    seed: int = 0
    wall_time: float = 0.0
    confusion: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def record(self) -> str:
        """Single-line machine-readable form."""
        out = {"task": self.task, "metric": self.metric, "value": round(self.value, 6),
               "n": self.n, "seed": self.seed, "wall_time": round(self.wall_time, 3)}
        out.update({k: (round(v, 6) if isinstance(v, float) else v) for k, v in self.extra.items()})
        return json.dumps(out, sort_keys=True)

    def table(self) -> str:
        lines = [f"{'task':<12}{self.task}", f"{self.metric:<12}{self.value:.4f}", f"{'n':<12}{self.n}"]
        for k, v in sorted(self.extra.items()):
            lines.append(f"{k:<12}{v:.4f}" if isinstance(v, float) else f"{k:<12}{v}")
        if self.confusion:
            k = len(self.confusion)
            lines.append("confusion (rows: true, columns: predicted)")
            lines.append("     " + "".join(f"{j:>6}" for j in range(k)))
            for i, row in enumerate(self.confusion):
                lines.append(f"{i:>5}" + "".join(f"{c:>6}" for c in row))
        return "\n".join(lines)

    def comparable(self) -> dict:
        """Everything except timing."""
        return {"task": self.task, "metric": self.metric, "value": self.value, "n": self.n,
                "seed": self.seed, "confusion": self.confusion, "extra": self.extra}


def _engine(model: Model, seed: int, program=None, memo: str = "ad") -> Engine:
    return Engine(program or load_program("reference", "inference"), model, seed, memo=memo)


def _batched_argmax(model, engine, goals, images, seed, batch=256):
    """Binding of the most probable answer for each goal (first on ties)."""
    templates = TemplateCache(engine)
    out = []
    for start in range(0, len(goals), batch):
        chunk = range(start, min(len(goals), start + batch))
        compiled = [templates.get(goals[i]) for i in chunk]
        envs = [QueryEnv({("ph", j): img for j, img in enumerate(images[i])},
                         (seed, EVAL_STREAM, i)) for i in chunk]
        probs, slices, _ = evaluate_compiled(model, compiled, envs)
        for cq, sl in zip(compiled, slices):
            p = probs.data[sl]
            out.append(cq.bindings[int(np.argmax(p))] if len(p) else None)
    return out


def _classification(task, model, data, seed, engine):
    k = 10 if task == "digit" else 19
    s = Var("S")
    if task == "digit":
        goals = [Compound("digit", (placeholder(0), s))] * len(data)
        images = [(img,) for img in data.images]
        truth = [int(x) for x in data.labels]
    else:
        goals = [Compound("addition", (placeholder(0), placeholder(1), s))] * len(data)
        images = [(a, b) for a, b, _ in data]
        truth = [int(t) for _, _, t in data]
    preds = []
    for b in _batched_argmax(model, engine, goals, images, seed):
        preds.append(None if b is None else int(b["S"].value))
    confusion = np.zeros((k, k), dtype=np.int64)
    correct = 0
    for t, p in zip(truth, preds):
        correct += t == p
        if p is not None and 0 <= p < k:
            confusion[t, p] += 1
    return correct / len(truth), confusion.tolist(), {}


def _generated(model, engine, goal, repeats, seed):
    """Answers of ``goal`` under ``repeats`` independent noise streams."""
    names = {v.name: v for v in variables(goal)}
    cq = compile_goal(engine.solver, goal, names)
    envs = [QueryEnv({}, (seed, EVAL_STREAM, r)) for r in range(repeats)]
    _, _, ev = evaluate_compiled(model, [cq] * repeats, envs)
    runs = []
    for r in range(repeats):
        rows = []
        for b in cq.bindings:
            vals = {}
            for n, t in b.items():
                if type(t) is TensorRef:
                    vals[n] = ev.value(r, t.key)
                else:
                    vals[n] = t
            rows.append(vals)
        runs.append(rows)
    return runs


def _gen_digit(model, train, seed, engine, repeats):
    runs = _generated(model, engine, Compound("digit", (Var("I"), Var("D"))), repeats, seed)
    answers = [(row["I"], int(row["D"].value)) for rows in runs for row in rows]
    labels = glyphs.nearest_labels([a[0] for a in answers], train)
    confusion = np.zeros((10, 10), dtype=np.int64)
    for (_, d), lab in zip(answers, labels):
        confusion[d, int(lab)] += 1
    acc = float(np.mean([lab == d for (_, d), lab in zip(answers, labels)]))
    return acc, confusion.tolist(), {"answers": len(answers)}


def _gen_add(model, train, seed, engine, repeats):
    ok = total = 0
    for target in range(19):
        goal = Compound("addition", (Var("I1"), Var("I2"), Int(target)))
        runs = _generated(model, engine, goal, repeats, seed)
        rows = [row for rs in runs for row in rs]
        if not rows:
            continue
        imgs = [row["I1"] for row in rows] + [row["I2"] for row in rows]
        labs = glyphs.nearest_labels(imgs, train)
        a, b = labs[:len(rows)], labs[len(rows):]
        hits = int(np.sum(a + b == target))
        ok += hits
        total += len(rows)
    return ok / max(total, 1), [], {"answers": total}


def masked_goal(engine: Engine, query: glyphs.MaskedAdditionQuery):
    """``multi_addition(X, Y, target)`` with image terms or fresh variables."""
    names = {}
    lists = []
    for k, row in enumerate(query.images):
        items = []
        for i, img in enumerate(row):
            if img is None:
                v = Var(f"M{k}{i}")
                names[v.name] = v
                items.append(v)
            else:
                items.append(engine.add_image(img))
        lists.append(make_list(items))
    return Compound("multi_addition", (lists[0], lists[1], Int(query.target))), names


def _multi_add(model, train, seed, test, n, prune=MULTI_PRUNE):
    queries = glyphs.make_masked_queries(n, seed, test)
    engine = _engine(model, seed)
    solved = 0
    baseline = []
    for q in queries:
        goal, names = masked_goal(engine, q)
        answers = engine.answer(goal, names, prune=prune)
        baseline.append(glyphs.random_guess_rate(q))
        if not answers:
            continue
        top = answers[0]
        gen = {}
        for name, t in top.substitution.items():
            k, i = int(name[1]), int(name[2])
            gen[(k, i)] = top.tensors[t.key]
        solved += glyphs.generative_accuracy([(gen, q.digits, q.target)], train, "multi_add")
    return solved / n, [], {"baseline": float(np.mean(baseline))}


def evaluate(task: str, model: Model, data=None, *, train: GlyphDataset | None = None,
             seed: int = 0, repeats: int = 20, n: int = 100) -> EvalReport:
    """Score ``model`` on ``task`` using the inference form of the reference program.

    ``data`` is a test :class:`GlyphDataset` for ``digit`` and
    ``multi_add``, a list of ``(image, image, sum)`` for ``add``, and
    unused for the generative tasks.  ``train`` is the reference set for
    nearest-neighbour relabelling.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    if task.startswith("gen") or task == "multi_add":
        if train is None:
            raise ValueError(f"{task} needs the training set for nearest-neighbour labels")
    if task in ("digit", "add", "multi_add") and data is None:
        raise ValueError(f"{task} needs test data")
    if model.num_prototypes != 10:
        raise ValueError("evaluation uses the ten-digit reference program; model needs 10 prototypes")
    t0 = time.perf_counter()
    engine = _engine(model, seed)
    if task in ("digit", "add"):
        value, confusion, extra = _classification(task, model, data, seed, engine)
        metric, count = "accuracy", len(data)
    elif task == "gen_digit":
        value, confusion, extra = _gen_digit(model, train, seed, engine, repeats)
        metric, count = "generative_accuracy", extra["answers"]
    elif task == "gen_add":
        value, confusion, extra = _gen_add(model, train, seed, engine, repeats)
        metric, count = "generative_accuracy", extra["answers"]
    else:
        value, confusion, extra = _multi_add(model, train, seed, data, n)
        metric, count = "satisfaction_rate", n
    return EvalReport(task, metric, float(value), count, seed, time.perf_counter() - t0,
                      confusion, extra)


def export_prototype_gallery(model: Model, out_dir) -> list[str]:
    """Decode each prototype mean and write ``proto_<i>.pgm`` files."""
    os.makedirs(out_dir, exist_ok=True)
    imgs = model.decode(model.means).data.reshape((model.num_prototypes,) + model.config.image_shape)
    paths = []
    for i, img in enumerate(imgs):
        path = os.path.join(out_dir, f"proto_{i}.pgm")
        glyphs.write_pgm(path, img)
        paths.append(path)
    return paths


__all__ = ["EvalReport", "MULTI_PRUNE", "TASKS", "evaluate", "export_prototype_gallery", "masked_goal"]

"""Command-line entry point: ``protolog <command> [flags]``."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import glyphs
from .evaluation import TASKS, evaluate, export_prototype_gallery
from .logic.errors import LogicError
from .logic.parser import ParseError
from .logic.program import ProgramError
from .logic.terms import TensorRef, Term, format_term
from .model import Model
from .nesy.engine import Engine, NesyAnswer, load_program
from .training import TrainConfig, TrainingError, make_pairs, train_direct, train_distant

SEED_ENV = "PROTOLOG_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _labels(text: str) -> tuple:
    try:
        out = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("labels must be comma-separated integers") from None
    if len(set(out)) != len(out):
        raise argparse.ArgumentTypeError("labels must be distinct")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="protolog", description="Probabilistic logic programs with prototype-based "
                "neural predicates over synthetic digit glyphs.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def command(name, help_text):
        c = sub.add_parser(name, help=help_text, description=help_text)
        c.add_argument("--seed", type=int, default=None,
                       help=f"random seed (default: ${SEED_ENV} or 0)")
        return c

    c = command("gen-data", "write a synthetic glyph dataset file")
    c.add_argument("--n", type=int, default=10_000, help="number of glyphs")
    c.add_argument("--split", choices=sorted(glyphs.SPLITS), default="train")
    c.add_argument("--out", required=True, help="output dataset file")

    c = command("train", "train a model through the program and write a checkpoint")
    c.add_argument("--task", choices=("digit", "add"), default="digit")
    c.add_argument("--program", default="reference", help="shipped program name or .pl file")
    c.add_argument("--data", help="training dataset file (generated from the seed if omitted)")
    c.add_argument("--n", type=int, default=10_000,
                   help="training examples to generate when --data is omitted (pairs for add)")
    c.add_argument("--epochs", type=int, default=None, help="default 5 for digit, 10 for add")
    c.add_argument("--batch-size", type=int, default=32)
    c.add_argument("--lr", type=float, default=1e-3)
    c.add_argument("--elbo-weight", type=float, default=0.0,
                   help="weight of the auxiliary evidence-bound term (digit task only)")
    c.add_argument("--labels", type=_labels, default=None,
                   help="prototype labels, e.g. 1,2,3 (default 0..9)")
    c.add_argument("--out", required=True, help="checkpoint file")

    for name, text in (("query", "answer one goal"), ("repl", "answer goals read from standard input")):
        c = command(name, text)
        c.add_argument("--ckpt", required=True, help="checkpoint file")
        c.add_argument("--program", default="reference", help="shipped program name or .pl file")
        if name == "query":
            c.add_argument("--goal", required=True, help='goal text, e.g. "digit(#img(\\"a.pgm\\"), D)"')
        c.add_argument("--img-out", default="generated", help="directory for generated images")
        c.add_argument("--prune", type=float, default=None,
                       help="drop choices below this probability during search")
        c.add_argument("--memo", choices=("ad", "all", "none"), default="ad")

    c = command("eval", "score a checkpoint on an evaluation task")
    c.add_argument("--task", choices=TASKS, required=True)
    c.add_argument("--ckpt", required=True)
    c.add_argument("--data", help="test dataset file (generated from the seed if omitted)")
    c.add_argument("--train-data", help="reference set for nearest-neighbour labels "
                   "(generated from the seed if omitted)")
    c.add_argument("--repeats", type=int, default=20, help="noise draws per generative query")
    c.add_argument("--n", type=int, default=100, help="masked queries for multi_add")
    c.add_argument("--json", action="store_true", help="print a single JSON record")

    c = command("gallery", "write the decoded prototype means as images")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--out-dir", required=True)
    return p


# --- commands ---------------------------------------------------------------------


def _gen_data(a) -> int:
    ds = glyphs.generate_dataset(a.n, a.split, a.seed)
    glyphs.save_dataset(ds, a.out)
    print(f"wrote {len(ds)} glyphs to {a.out}")
    return 0


def _train(a) -> int:
    epochs = a.epochs if a.epochs is not None else (5 if a.task == "digit" else 10)
    cfg = TrainConfig(task=a.task, epochs=epochs, batch_size=a.batch_size, lr=a.lr, seed=a.seed,
                      n_train=a.n, program=a.program, elbo_weight=a.elbo_weight, labels=a.labels)
    program = load_program(a.program, "training")
    if a.data:
        data = glyphs.load_dataset(a.data)
    else:
        data = glyphs.generate_dataset(a.n if a.task == "digit" else 2 * a.n, "train", a.seed)
    if cfg.labels is not None:
        # glyphs of digits without a prototype cannot be expressed by the program
        keep = np.isin(data.labels, cfg.labels)
        data = glyphs.GlyphDataset(data.images[keep], data.labels[keep], data.split, data.seed)
    log = lambda msg: print(msg, file=sys.stderr)
    if a.task == "digit":
        result = train_direct(data, cfg, program=program, log=log)
    else:
        result = train_distant(make_pairs(data), cfg, program=program, log=log)
    result.model.save(a.out)
    print(f"wrote checkpoint {a.out} ({epochs} epochs, {result.wall_time:.1f}s)")
    return 0


class _Session:
    """Shared state of ``query`` and ``repl``: one engine, numbered goals."""

    def __init__(self, a):
        self.model = Model.load(a.ckpt)
        self.engine = Engine(load_program(a.program, "inference"), self.model, a.seed, memo=a.memo)
        self.img_out = a.img_out
        self.prune = a.prune
        self.goals = 0

    def run(self, text: str, out) -> None:
        n = self.goals
        self.goals += 1
        answers = self.engine.answer(text, prune=self.prune)
        for rank, ans in enumerate(answers):
            out.write(f"{ans.probability:.6f}\t{self._format(ans, n, rank)}\n")
        if not answers:
            out.write("no answers\n")
        out.flush()

    def _format(self, ans: NesyAnswer, n: int, rank: int) -> str:
        parts = []
        for name, term in ans.substitution.items():
            parts.append(f"{name}={self._value(term, ans, f'q{n}_a{rank}_{name}')}")
        return ", ".join(parts) if parts else "true"

    def _value(self, term: Term, ans: NesyAnswer, stem: str) -> str:
        if type(term) is TensorRef and term.kind == "image" and term.key in ans.tensors:
            os.makedirs(self.img_out, exist_ok=True)
            path = os.path.join(self.img_out, stem + ".pgm")
            glyphs.write_pgm(path, ans.tensors[term.key])
            return os.path.relpath(path)
        return format_term(term)


def _query(a) -> int:
    _Session(a).run(a.goal, sys.stdout)
    return 0


def _repl(a) -> int:
    session = _Session(a)
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            print("?- ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        if text in ("halt.", "quit", "exit"):
            break
        text = text[:-1] if text.endswith(".") else text
        try:
            session.run(text, sys.stdout)
        except (LogicError, ParseError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
    return 0


def _eval(a) -> int:
    model = Model.load(a.ckpt)
    train = glyphs.load_dataset(a.train_data) if a.train_data else None
    if a.task.startswith("gen") or a.task == "multi_add":
        train = train or glyphs.generate_dataset(10_000, "train", a.seed)
    if a.task == "add":
        test = glyphs.load_dataset(a.data, "test") if a.data else glyphs.generate_dataset(4000, "test", a.seed)
        data = make_pairs(test)
    elif a.task in ("digit", "multi_add"):
        data = glyphs.load_dataset(a.data, "test") if a.data else glyphs.generate_dataset(2000, "test", a.seed)
    else:
        data = None
    report = evaluate(a.task, model, data, train=train, seed=a.seed, repeats=a.repeats, n=a.n)
    print(report.record() if a.json else report.table())
    return 0


def _gallery(a) -> int:
    for path in export_prototype_gallery(Model.load(a.ckpt), a.out_dir):
        print(path)
    return 0


COMMANDS = {"gen-data": _gen_data, "train": _train, "query": _query, "repl": _repl,
            "eval": _eval, "gallery": _gallery}


def run(argv=None) -> int:
    """Execute one command line; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None:
            args.seed = _default_seed()
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except (LogicError, ParseError, ProgramError, TrainingError, ValueError, KeyError, OSError) as exc:
        print(f"protolog {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

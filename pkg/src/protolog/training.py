"""Training through the logic program with a binary cross-entropy objective."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .glyphs import GlyphDataset, generate_dataset
from .logic.program import Program
from .logic.terms import Compound, Int, TensorRef
from .logic.unify import variables
from . import proto
from .model import Model, ModelConfig
from .nesy.engine import Engine, compile_goal, load_program
from .nesy.evaluator import QueryEnv
from .tensor import autodiff as ad
from .tensor import nn

TRAIN_STREAM = 1


class TrainingError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    task: str = "digit"
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    num_prototypes: int = 10
    latent_dim: int = 8
    hidden: int = 64
    temperature: float = 1.0
    eps: float = 1e-7
    n_train: int = 10_000
    n_test: int = 2_000
    symmetric: bool = False
    program: str = "reference"
    elbo_weight: float = 0.0
    labels: tuple | None = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = tuple(int(x) for x in self.labels)
            self.num_prototypes = len(self.labels)
        if self.elbo_weight < 0:
            raise ValueError("elbo_weight must be non-negative")
        for name in ("batch_size", "num_prototypes", "latent_dim", "hidden", "n_train", "n_test"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lr <= 0 or self.temperature <= 0 or not 0 < self.eps < 0.5:
            raise ValueError("lr, temperature and eps must be positive (eps < 0.5)")
        if self.task not in ("digit", "add"):
            raise ValueError("task must be 'digit' or 'add'")

    def model_config(self, image_shape=(16, 16)) -> ModelConfig:
        return ModelConfig(self.num_prototypes, self.latent_dim, self.hidden, tuple(image_shape),
                           self.temperature, self.seed, self.symmetric, self.labels)

    def to_json(self) -> dict:
        out = asdict(self)
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out


@dataclass
class TrainResult:
    model: Model
    epoch_losses: list = field(default_factory=list)
    batch_losses: list = field(default_factory=list)
    wall_time: float = 0.0


def placeholder(i: int) -> TensorRef:
    return TensorRef(("ph", i), "image")


class TemplateCache:
    """Compiled goals keyed by their placeholder form.

    Goals that differ only in which images fill the placeholders share
    proofs and circuits; only the numbers differ.
    """

    def __init__(self, engine: Engine):
        self.engine = engine
        self._cache: dict = {}

    def get(self, goal: Compound):
        hit = self._cache.get(goal)
        if hit is None:
            names = {v.name: v for v in variables(goal)}
            hit = self._cache[goal] = compile_goal(self.engine.solver, goal, names)
        return hit


def direct_goal(label: int) -> Compound:
    return Compound("digit", (placeholder(0), Int(int(label))))


def distant_goal(total: int) -> Compound:
    return Compound("addition", (placeholder(0), placeholder(1), Int(int(total))))


def query_probabilities(model: Model, templates: TemplateCache, goals, images, seeds) -> ad.Tensor:
    """Probability of each ground goal, differentiable in the model parameters."""
    from .nesy.engine import evaluate_compiled

    compiled = [templates.get(g) for g in goals]
    envs = [QueryEnv({("ph", i): img for i, img in enumerate(imgs)}, seed)
            for imgs, seed in zip(images, seeds)]
    probs, slices, _ = evaluate_compiled(model, compiled, envs)
    # a ground goal has at most one answer; a goal with none has probability 0
    rows, missing = [], []
    for q, sl in enumerate(slices):
        if sl.stop > sl.start:
            rows.append(sl.start)
        else:
            missing.append(q)
    if not missing:
        return ad.take_rows(probs, rows)
    full = [ad.take_rows(probs, [sl.start]) if sl.stop > sl.start else ad.Tensor(np.zeros(1))
            for sl in slices]
    return ad.concat(full)


def negative_elbo(model: Model, images, labels, seeds) -> ad.Tensor:
    """Mean per-pixel negative evidence bound of labelled images, one latent sample each.

    Unit-variance pixel likelihood and the labelled prototype as prior.
    The constant normalising terms are dropped.
    """
    x = np.stack([imgs[0].reshape(-1) for imgs in images])
    mean, log_std = model.encode_params(x)
    eps = np.stack([np.random.default_rng([*seed, 0xe1b0]).standard_normal(model.latent_dim)
                    for seed in seeds])
    z = ad.add(mean, ad.mul(proto.floored_std(log_std), eps))
    recon = model.decode(z)
    rows = [model.label_index(lab) for lab in labels]
    kl = proto.kl_diag(mean, log_std, ad.take_rows(model.means, rows), ad.take_rows(model.log_stds, rows))
    sse = ad.tsum(ad.square(ad.sub(recon, x)), -1)
    return ad.mean(ad.add(ad.mul(sse, 0.5), kl)) * (1.0 / x.shape[1])


def bce_loss(p: ad.Tensor, eps: float) -> ad.Tensor:
    return ad.mean(ad.bce(p, 1.0, eps))


def _examples(task: str, data):
    if task == "digit":
        return [(direct_goal(lab), (img,), int(lab)) for img, lab in zip(data.images, data.labels)]
    return [(distant_goal(s), (a, b), None) for a, b, s in data]


def _offending(idx, images) -> list[int]:
    bad = [int(i) for i, imgs in zip(idx, images) if not all(np.all(np.isfinite(x)) for x in imgs)]
    return bad or [int(i) for i in idx]


def _train(task: str, data, cfg: TrainConfig, model: Model | None, program: Program | None,
           log=None) -> TrainResult:
    t0 = time.perf_counter()
    examples = _examples(task, data)
    if not examples:
        raise ValueError("empty training set")
    shape = examples[0][1][0].shape
    model = model or Model.create(cfg.model_config(shape))
    program = program or load_program(cfg.program, "training")
    engine = Engine(program, model, cfg.seed)
    templates = TemplateCache(engine)
    adam = nn.AdamConfig(lr=cfg.lr)
    order_rng = np.random.default_rng([cfg.seed, 0x0de2])
    result = TrainResult(model)
    counter = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(examples))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            goals = [examples[i][0] for i in idx]
            images = [examples[i][1] for i in idx]
            seeds = [(cfg.seed, TRAIN_STREAM, counter + k) for k in range(len(idx))]
            counter += len(idx)
            try:
                p = query_probabilities(model, templates, goals, images, seeds)
                loss = bce_loss(p, cfg.eps)
                if cfg.elbo_weight > 0 and task == "digit":
                    labels = [examples[i][2] for i in idx]
                    loss = loss + cfg.elbo_weight * negative_elbo(model, images, labels, seeds)
                value = float(loss.data)
            except ad.NonFiniteError as exc:
                raise TrainingError(f"non-finite loss at examples {_offending(idx, images)}: {exc}") from None
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at examples {_offending(idx, images)}")
            grads = nn.backward(loss, model.store)
            nn.optimizer_step(model.store, grads, adam)
            losses.append(value)
            result.batch_losses.append(value)
        mean = float(np.mean(losses))
        result.epoch_losses.append(mean)
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {mean:.6f}")
    model.store.meta["train"] = cfg.to_json()
    model.store.meta["epoch_losses"] = result.epoch_losses
    result.wall_time = time.perf_counter() - t0
    return result


def train_direct(data: GlyphDataset, cfg: TrainConfig | None = None, model: Model | None = None,
                 program: Program | None = None, log=None) -> TrainResult:
    """Fit the model on ``digit(image, label)`` facts."""
    cfg = cfg or TrainConfig(task="digit")
    return _train("digit", data, cfg, model, program, log)


def train_distant(pairs, cfg: TrainConfig | None = None, model: Model | None = None,
                  program: Program | None = None, log=None) -> TrainResult:
    """Fit the model on ``addition(image1, image2, sum)`` facts only."""
    cfg = cfg or TrainConfig(task="add", epochs=10)
    return _train("add", pairs, cfg, model, program, log)


def make_pairs(ds: GlyphDataset) -> list[tuple]:
    """Consecutive glyphs paired up with the sum of their labels."""
    n = len(ds) // 2
    return [(ds.images[2 * i], ds.images[2 * i + 1], int(ds.labels[2 * i] + ds.labels[2 * i + 1]))
            for i in range(n)]


def pair_labels(ds: GlyphDataset) -> np.ndarray:
    n = len(ds) // 2
    return np.stack([ds.labels[0:2 * n:2], ds.labels[1:2 * n:2]], axis=1)


def train_from_config(cfg: TrainConfig, data: GlyphDataset | None = None, log=None) -> TrainResult:
    """Generate (or use) the training glyphs and run the configured task."""
    if cfg.task == "digit":
        data = data if data is not None else generate_dataset(cfg.n_train, "train", cfg.seed)
        return train_direct(data, cfg, log=log)
    if data is None:
        data = generate_dataset(2 * cfg.n_train, "train", cfg.seed)
    return train_distant(make_pairs(data), cfg, log=log)


def config_from_meta(store) -> TrainConfig | None:
    raw = store.meta.get("train")
    return None if raw is None else TrainConfig(**raw)


def config_digest(cfg: TrainConfig) -> str:
    return json.dumps(cfg.to_json(), sort_keys=True)


__all__ = [
    "TemplateCache", "TrainConfig", "TrainResult", "TrainingError", "bce_loss", "config_digest",
    "config_from_meta", "direct_goal", "distant_goal", "make_pairs", "negative_elbo", "pair_labels",
    "placeholder", "query_probabilities",
    "train_direct", "train_distant", "train_from_config",
]

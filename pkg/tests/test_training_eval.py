import math

import numpy as np
import pytest

import mini
from protolog import glyphs
from protolog.evaluation import EvalReport, evaluate, export_prototype_gallery
from protolog.logic.solver import QueryContext
from protolog.logic.terms import Compound, Int
from protolog.model import Model, ModelConfig
from protolog.nesy.engine import Engine, load_program
from protolog.prob.engine import collect_solutions
from protolog.tensor import autodiff as ad
from protolog.training import (
    TemplateCache, TrainConfig, TrainingError, bce_loss, config_digest, direct_goal, distant_goal,
    make_pairs, negative_elbo, pair_labels, placeholder, query_probabilities, train_direct,
    train_distant,
)


@pytest.fixture(scope="module")
def small():
    return glyphs.generate_dataset(200, "train", 0)


def symmetric():
    return Model.create(ModelConfig(seed=0, symmetric=True))


def probabilities(model, mode, goals, images):
    templates = TemplateCache(Engine(load_program("reference", mode), model, 0))
    seeds = [(0, 1, k) for k in range(len(goals))]
    return query_probabilities(model, templates, goals, images, seeds).data


def test_loss_at_perfect_model_is_eps():
    eps = 1e-7
    value = bce_loss(ad.Tensor(np.ones(4)), eps).item()
    assert value == pytest.approx(-math.log(1 - eps), rel=1e-9)
    assert value == pytest.approx(eps, rel=1e-6)


def test_uniform_model_initial_loss_is_log_k(small):
    model = symmetric()
    goals = [direct_goal(int(d)) for d in small.labels[:20]]
    images = [(img,) for img in small.images[:20]]
    p = probabilities(model, "inference", goals, images)
    loss = bce_loss(ad.Tensor(p), 1e-7).item()
    assert loss == pytest.approx(math.log(10), abs=1e-9)
    # the training program additionally multiplies by the decode similarity
    pt = probabilities(model, "training", goals, images)
    assert np.all(pt <= p + 1e-12) and np.all(pt > 0)


@pytest.mark.parametrize("total", range(19))
def test_uniform_model_addition_probability(total):
    model = symmetric()
    pairs = sum(1 for a in range(10) for b in range(10) if a + b == total)
    rng = np.random.default_rng(total)
    images = [(rng.uniform(size=(16, 16)), rng.uniform(size=(16, 16)))]
    p = probabilities(model, "inference", [distant_goal(total)], images)
    assert p[0] == pytest.approx(pairs / 100, abs=1e-12)


@pytest.mark.parametrize("total, proofs", [(0, 1), (9, 10), (18, 1), (10, 9)])
def test_addition_proof_counts(total, proofs):
    engine = Engine(load_program("reference", "training"), symmetric(), 0)
    goal = Compound("addition", (placeholder(0), placeholder(1), Int(total)))
    ((_, found),) = collect_solutions(engine.solver, goal, {}, QueryContext())
    assert len(found) == proofs


def test_impossible_sum_has_probability_zero():
    p = probabilities(symmetric(), "inference", [distant_goal(19)],
                      [(np.zeros((16, 16)), np.zeros((16, 16)))])
    assert p[0] == 0.0


def test_program_gradient_miniature():
    assert mini.program_gradcheck(0) < 1e-3


def test_short_training_is_deterministic(small):
    cfg = TrainConfig(epochs=1, seed=3, n_train=200)
    a = train_direct(small, cfg)
    b = train_direct(small, cfg)
    assert a.batch_losses == b.batch_losses
    for name in a.model.store:
        assert np.array_equal(a.model.store[name].data, b.model.store[name].data)


def test_short_training_reduces_loss(small):
    res = train_direct(small, TrainConfig(epochs=3, seed=0, n_train=200))
    assert len(res.epoch_losses) == 3
    assert res.epoch_losses[-1] < res.epoch_losses[0]
    assert res.model.store.meta["train"]["epochs"] == 3


def test_distant_training_runs(small):
    pairs = make_pairs(small)
    res = train_distant(pairs[:64], TrainConfig(task="add", epochs=1, seed=0))
    assert len(res.batch_losses) == 2 and all(np.isfinite(res.batch_losses))


def test_elbo_term_is_finite_and_differentiable(small):
    model = Model.create(ModelConfig(seed=0))
    images = [(img,) for img in small.images[:8]]
    v = negative_elbo(model, images, [int(d) for d in small.labels[:8]], [(0, 1, k) for k in range(8)])
    assert np.isfinite(v.item()) and v.item() > 0
    res = train_direct(small, TrainConfig(epochs=1, seed=0, elbo_weight=5.0))
    assert all(np.isfinite(res.batch_losses))


def test_zero_epochs_returns_initial_model(small):
    res = train_direct(small, TrainConfig(epochs=0, seed=4))
    fresh = Model.create(TrainConfig(seed=4).model_config())
    for name in fresh.store:
        assert np.array_equal(res.model.store[name].data, fresh.store[name].data)


def test_non_finite_loss_aborts(small):
    bad = glyphs.GlyphDataset(small.images[:4].copy(), small.labels[:4])
    bad.images[2, 0, 0] = np.nan
    with pytest.raises(TrainingError, match=r"examples \[\d\]"):
        train_direct(bad, TrainConfig(epochs=1, batch_size=4))


@pytest.mark.parametrize("kw", [dict(epochs=-1), dict(batch_size=0), dict(lr=0.0), dict(task="sub"),
                                dict(eps=0.6), dict(elbo_weight=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_labels_set_prototype_count():
    cfg = TrainConfig(labels=[1, 2, 3])
    assert cfg.num_prototypes == 3 and cfg.labels == (1, 2, 3)
    assert config_digest(cfg) == config_digest(TrainConfig(labels=(1, 2, 3)))


def test_pairs_and_labels(small):
    pairs = make_pairs(small)
    labels = pair_labels(small)
    assert len(pairs) == 100
    assert all(s == a + b for (_, _, s), (a, b) in zip(pairs, labels))


def test_eval_report_formats():
    r = EvalReport("digit", "accuracy", 0.5, 10, 1, 0.25, [[1, 0], [0, 1]], {"baseline": 0.1234567})
    assert '"value": 0.5' in r.record() and '"baseline": 0.123457' in r.record()
    assert "confusion" in r.table()
    assert "wall_time" not in r.comparable()


def test_evaluate_digit_is_side_effect_free(small):
    model = Model.create(ModelConfig(seed=2))
    test = glyphs.generate_dataset(50, "test", 0)
    a = evaluate("digit", model, test)
    b = evaluate("digit", model, test)
    assert a.comparable() == b.comparable()
    assert a.n == 50 and sum(map(sum, a.confusion)) == 50


def test_evaluate_generative_tasks_small(small):
    # a cold temperature makes memberships sharp so pruning keeps the masked search small
    model = Model.create(ModelConfig(seed=2, temperature=1e-3))
    r = evaluate("gen_digit", model, train=small, repeats=2)
    assert r.n == 20 and 0.0 <= r.value <= 1.0
    r = evaluate("gen_add", model, train=small, repeats=1)
    assert r.n == 100
    test = glyphs.generate_dataset(200, "test", 0)
    r = evaluate("multi_add", model, test, train=small, n=3)
    assert r.n == 3 and 0 < r.extra["baseline"] < 1


def test_evaluate_errors(small):
    model = Model.create(ModelConfig(seed=0))
    with pytest.raises(ValueError):
        evaluate("spelling", model, small)
    with pytest.raises(ValueError):
        evaluate("gen_digit", model)
    with pytest.raises(ValueError):
        evaluate("digit", model)
    three = Model.create(ModelConfig(num_prototypes=3, labels=(1, 2, 3)))
    with pytest.raises(ValueError):
        evaluate("digit", three, small)


def test_gallery_symmetric_and_deterministic(tmp_path):
    model = symmetric()
    paths = export_prototype_gallery(model, tmp_path / "a")
    assert [p.rsplit("/", 1)[1] for p in paths] == [f"proto_{i}.pgm" for i in range(10)]
    imgs = [glyphs.read_pgm(p) for p in paths]
    assert all(np.array_equal(imgs[0], im) for im in imgs)
    again = export_prototype_gallery(model, tmp_path / "b")
    assert all(open(p, "rb").read() == open(q, "rb").read() for p, q in zip(paths, again))

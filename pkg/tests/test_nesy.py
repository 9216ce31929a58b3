import numpy as np
import pytest

from protolog import glyphs
from protolog.logic.errors import ModeError
from protolog.logic.program import parse_program, program_signature
from protolog.logic.terms import Compound, Int, Var
from protolog.model import Model, ModelConfig
from protolog.nesy.engine import (
    Engine, answer_canonical, decode_goal, encode_goal, im_similar, load_program,
    neural_ad_probabilities, transform_for_inference,
)


@pytest.fixture(scope="module")
def model():
    return Model.create(ModelConfig(seed=0))


def engine(model, mode="inference", seed=0, program="reference"):
    return Engine(load_program(program, mode), model, seed)


def test_inference_heads_sum_to_one(model):
    e = engine(model)
    rng = np.random.default_rng(0)
    for d in range(10):
        probs, _ = neural_ad_probabilities(e, glyphs.render(d, rng))
        assert abs(sum(probs) - 1.0) < 1e-9


def test_training_heads_sum_at_most_one(model):
    e = engine(model, "training")
    for d in range(10):
        probs, _ = neural_ad_probabilities(e, glyphs.canonical(d))
        assert sum(probs) <= 1.0 + 1e-12
        assert all(p >= 0 for p in probs)


def test_fully_unbound_digit_generates_one_image_per_label(model):
    answers = answer_canonical(engine(model))
    assert sorted(a.substitution["D"].value for a in answers) == list(range(10))
    for a in answers:
        ref = a.substitution["I"]
        assert a.tensors[ref.key].shape == (16, 16)


def test_ground_digit_is_head_probability(model):
    e = engine(model)
    img = glyphs.canonical(3)
    probs, _ = neural_ad_probabilities(e, img)
    for d in (0, 3, 7):
        (a,) = answer_canonical(e, img, d)
        assert a.probability == pytest.approx(probs[d], abs=1e-12)


def test_unbound_image_with_ground_label(model):
    (a,) = answer_canonical(engine(model), None, 5)
    assert 0.0 < a.probability <= 1.0
    assert set(a.substitution) == {"I"}


def test_encode_ground_image(model):
    e = engine(model)
    img = glyphs.canonical(2)
    bind, p = encode_goal(e, img, 2)
    assert set(bind) == {"P"}
    probs, _ = neural_ad_probabilities(e, img)
    # at inference decode contributes 1, so encode alone is the head score
    assert p == pytest.approx(probs[2], abs=1e-12)


def test_encode_generates_image_from_prototype(model):
    bind, p = encode_goal(engine(model), None, 4)
    assert set(bind) == {"P", "Image"}
    assert 0.0 <= p <= 1.0


def test_encode_mode_error(model):
    with pytest.raises(ModeError):
        encode_goal(engine(model), None, None)
    with pytest.raises(ModeError):
        decode_goal(engine(model), None, glyphs.canonical(1))


def test_decode_at_inference_is_certain(model):
    _, p = decode_goal(engine(model), 3, glyphs.canonical(3))
    assert p == 1.0


def test_decode_at_training_is_similarity(model):
    _, p = decode_goal(engine(model, "training"), 3, glyphs.canonical(3))
    assert 0.0 <= p < 1.0


def test_symmetric_init_is_uniform():
    m = Model.create(ModelConfig(seed=0, symmetric=True))
    probs, _ = neural_ad_probabilities(engine(m), glyphs.canonical(8))
    np.testing.assert_allclose(probs, np.full(10, 0.1), atol=1e-12)


def test_im_similar_values():
    z = np.zeros((16, 16))
    assert im_similar(z, z).item() == 1.0
    assert im_similar(z, np.ones((16, 16))).item() == 0.0
    assert im_similar(z, np.full((16, 16), 0.5)).item() == 0.75
    with pytest.raises(ValueError):
        im_similar(z, np.zeros(4))


def test_inference_transform_replaces_decode():
    train = load_program("reference", "training")
    inf = transform_for_inference(train)
    assert len(train.lookup(("decode", 3))) == 2
    (clause,) = inf.lookup(("decode", 3))
    assert clause.head.args[2].value == 1.0
    again = transform_for_inference(inf)
    assert program_signature(again) == program_signature(inf)
    # everything but decode/3 is untouched
    for ind in (("encode", 3), ("addition", 3), ("number", 3)):
        assert inf.lookup(ind) == train.lookup(ind)


def test_transform_requires_decode():
    from protolog.logic.program import ProgramError
    with pytest.raises(ProgramError):
        transform_for_inference(parse_program("a."))


def test_addition_with_one_ground_image(model):
    e = engine(model)
    ref = e.add_image(glyphs.canonical(3))
    i2 = Var("I2")
    answers = e.answer(Compound("addition", (ref, i2, Int(7))), {"I2": i2})
    assert len(answers) == 8
    probs = [a.probability for a in answers]
    assert probs == sorted(probs, reverse=True)


def test_one_sample_per_prototype_per_query(model):
    e = engine(model)
    i1, i2 = Var("I1"), Var("I2")
    answers = e.answer(Compound("addition", (i1, i2, Int(8))), {"I1": i1, "I2": i2})
    fours = [a for a in answers if a.substitution["I1"] == a.substitution["I2"]]
    assert len(fours) == 1
    a = fours[0]
    (key,) = a.tensors
    assert a.tensors[key].shape == (16, 16)


def test_queries_use_fresh_noise_but_are_reproducible(model):
    def images(seed, n):
        e = engine(model, seed=seed)
        out = []
        for _ in range(n):
            (a,) = answer_canonical(e, None, 6)
            out.append(next(iter(a.tensors.values())))
        return out

    first, second = images(3, 2)
    assert not np.array_equal(first, second)
    again = images(3, 2)
    assert np.array_equal(first, again[0]) and np.array_equal(second, again[1])


def test_didactic_program_three_prototypes():
    m = Model.create(ModelConfig(seed=1, num_prototypes=3, labels=(1, 2, 3)))
    e = engine(m, program="didactic")
    probs, _ = neural_ad_probabilities(e, glyphs.canonical(2))
    assert len(probs) == 3 and abs(sum(probs) - 1.0) < 1e-9


def test_unknown_label_has_no_answers(model):
    assert answer_canonical(engine(model), glyphs.canonical(1), 11) == []


def test_classifier_declaration_needs_ground_input(model):
    src = ("nn(classifier, [X], Y, [0,1,2,3,4,5,6,7,8,9]) :: digit(X, Y).\n"
           "addition(A, B, S) :- digit(A, D1), digit(B, D2), S is D1 + D2.\n")
    e = Engine(parse_program(src), model, 0)
    d = Var("D")
    answers = e.answer(Compound("digit", (e.add_image(glyphs.canonical(3)), d)), {"D": d})
    assert sorted(a.substitution["D"].value for a in answers) == list(range(10))
    assert abs(sum(a.probability for a in answers) - 1.0) < 1e-9
    i2 = Var("I2")
    assert e.answer(Compound("addition", (e.add_image(glyphs.canonical(3)), i2, Int(7))), {"I2": i2}) == []

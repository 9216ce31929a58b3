import zlib

import numpy as np
import pytest

import gradcheck
from protolog.tensor import autodiff as ad
from protolog.tensor import nn


def _pos(rng, shape):
    return rng.uniform(0.2, 2.0, size=shape)


def _prob(rng, shape):
    return rng.uniform(0.05, 0.95, size=shape)


# op name -> (function, input generator)
OPS = {
    "add": (ad.add, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "sub": (ad.sub, lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 1))]),
    "mul": (ad.mul, lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
    "div": (ad.div, lambda r: [r.normal(size=(2, 3)), _pos(r, (2, 3))]),
    "exp": (ad.exp, lambda r: [r.normal(size=(5,))]),
    "log": (ad.log, lambda r: [_pos(r, (5,))]),
    "tanh": (ad.tanh, lambda r: [r.normal(size=(4, 2))]),
    "sigmoid": (ad.sigmoid, lambda r: [r.normal(size=(4, 2))]),
    "square": (ad.square, lambda r: [r.normal(size=(6,))]),
    "clamp": (lambda a: ad.clamp(a, -0.5, 0.5), lambda r: [r.uniform(-0.45, 0.45, size=(6,))]),
    "matmul": (ad.matmul, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))]),
    "affine": (lambda x, w, b: ad.add(ad.matmul(x, w), b),
               lambda r: [r.normal(size=(2, 5)), r.normal(size=(5, 3)), r.normal(size=(3,))]),
    "sum": (lambda a: ad.tsum(a, 0), lambda r: [r.normal(size=(3, 4))]),
    "mean": (lambda a: ad.mean(a, 1), lambda r: [r.normal(size=(3, 4))]),
    "softmax": (lambda a: ad.mul(ad.softmax(a), ad.Tensor(np.arange(5.0))), lambda r: [r.normal(size=(2, 5))]),
    "log_softmax": (lambda a: ad.mul(ad.log_softmax(a), ad.Tensor(np.arange(5.0))),
                    lambda r: [r.normal(size=(2, 5))]),
    "mse": (ad.mse, lambda r: [r.uniform(size=(16,)), r.uniform(size=(16,))]),
    "bce": (lambda p: ad.bce(p, 1.0), lambda r: [_prob(r, (4,))]),
    "bce_soft_target": (lambda p, t: ad.bce(p, t), lambda r: [_prob(r, (4,)), _prob(r, (4,))]),
    "gaussian_log_density": (ad.gaussian_log_density,
                             lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,)), r.uniform(-0.5, 0.5, size=(4,))]),
    "take_rows": (lambda a: ad.take_rows(a, [2, 0, 2]), lambda r: [r.normal(size=(3, 2))]),
    "gather": (lambda a: ad.gather(a, [0, 1, 1], [2, 0, 2]), lambda r: [r.normal(size=(2, 3))]),
    "concat": (lambda a, b: ad.concat([a, b]), lambda r: [r.normal(size=(2,)), r.normal(size=(3,))]),
    "stack": (lambda a, b: ad.mul(ad.stack([a, b]), ad.Tensor(np.arange(6.0).reshape(2, 3))),
              lambda r: [r.normal(size=(3,)), r.normal(size=(3,))]),
    "index": (lambda a: ad.index(a, (slice(None), slice(1, 3))), lambda r: [r.normal(size=(2, 4))]),
    "reshape": (lambda a: ad.mul(ad.reshape(a, (3, 2)), ad.Tensor(np.arange(6.0).reshape(3, 2))),
                lambda r: [r.normal(size=(2, 3))]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    fn, gen = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = max(gradcheck.check(fn, gen(rng)) for _ in range(50))
    assert worst < 1e-4


def test_linear_identity_net():
    spec = nn.MLPSpec((3, 3), ("linear",))
    store = nn.ParamStore()
    store.add("net.0.weight", np.eye(3))
    store.add("net.0.bias", np.zeros(3))
    x = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(nn.mlp_forward(store, "net", x, spec).data, x)


def test_zero_weights_sigmoid_half():
    spec = nn.MLPSpec((4, 6, 3), ("tanh", "sigmoid"))
    store = nn.ParamStore()
    nn.init_mlp(store, "net", spec, np.random.default_rng(0))
    for name in store:
        store[name].data[...] = 0.0
    out = nn.mlp_forward(store, "net", np.ones((2, 4)), spec).data
    assert np.all(out == 0.5)


def test_mlp_matches_straight_line_numpy():
    rng = np.random.default_rng(4)
    spec = nn.MLPSpec((7, 5, 4, 2), ("tanh", "tanh", "sigmoid"))
    store = nn.ParamStore()
    nn.init_mlp(store, "m", spec, rng)
    x = rng.normal(size=(3, 7))
    h = x
    for i, act in enumerate(spec.activations):
        h = h @ store[f"m.{i}.weight"].data + store[f"m.{i}.bias"].data
        h = np.tanh(h) if act == "tanh" else 1.0 / (1.0 + np.exp(-h))
    np.testing.assert_allclose(nn.mlp_forward(store, "m", x, spec).data, h, rtol=0, atol=1e-12)


def test_mlp_shape_mismatch():
    spec = nn.MLPSpec((3, 2), ("tanh",))
    store = nn.ParamStore()
    nn.init_mlp(store, "m", spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.mlp_forward(store, "m", np.ones(4), spec)


def test_glorot_bounds_and_zero_bias():
    spec = nn.MLPSpec((256, 64), ("tanh",))
    store = nn.ParamStore()
    nn.init_mlp(store, "m", spec, np.random.default_rng(0))
    lim = np.sqrt(6.0 / (256 + 64))
    assert np.abs(store["m.0.weight"].data).max() <= lim
    assert not store["m.0.bias"].data.any()


def test_backward_linear():
    store = nn.ParamStore()
    w = store.add("w", 0.7)
    grads = nn.backward(ad.mul(w, 3.0), store)
    assert grads["w"] == 3.0


def test_backward_sigmoid_squared():
    store = nn.ParamStore()
    w = store.add("w", 0.0)
    grads = nn.backward(ad.square(ad.sigmoid(w)), store)
    assert grads["w"] == pytest.approx(0.25, abs=1e-15)


def test_unreached_parameter_gets_zero():
    store = nn.ParamStore()
    w = store.add("w", 1.0)
    store.add("v", np.ones(3))
    grads = nn.backward(ad.mul(w, 2.0), store)
    assert np.array_equal(grads["v"], np.zeros(3))


def test_backward_needs_scalar():
    store = nn.ParamStore()
    w = store.add("w", np.ones(2))
    with pytest.raises(ValueError):
        nn.backward(ad.mul(w, 2.0), store)


def test_shared_node_visited_once():
    x = ad.parameter(2.0)
    y = ad.mul(x, x)
    z = ad.add(y, y)
    z.backward()
    assert x.grad == 8.0
    assert len(ad._topo(z)) == 3


def test_mlp_bce_gradient():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(4, 6))
    t = np.array([1.0, 0.0, 1.0, 1.0])

    def loss(w0, b0, w1, b1):
        h = ad.tanh(ad.add(ad.matmul(x, w0), b0))
        p = ad.sigmoid(ad.add(ad.matmul(h, w1), b1))
        return ad.mean(ad.bce(ad.reshape(p, (4,)), t))

    arrays = [rng.normal(size=(6, 5)), rng.normal(size=5), rng.normal(size=(5, 1)), rng.normal(size=1)]
    assert gradcheck.check(loss, arrays) < 1e-4


def test_non_finite_values_raise():
    with pytest.raises(FloatingPointError):
        ad.log(ad.Tensor(np.array([-1.0])))


def test_adam_zero_gradient_keeps_parameters():
    store = nn.ParamStore()
    store.add("w", np.array([1.0, -2.0]))
    nn.optimizer_step(store, {"w": np.zeros(2)}, nn.AdamConfig(lr=0.1))
    assert np.array_equal(store["w"].data, [1.0, -2.0])


def test_adam_first_step_bounded_by_lr():
    store = nn.ParamStore()
    store.add("w", np.array([0.0, 0.0]))
    nn.optimizer_step(store, {"w": np.array([3.0, -0.01])}, nn.AdamConfig(lr=0.01))
    step = store["w"].data
    assert step[0] < 0 < step[1]
    assert np.all(np.abs(step) <= 0.01 + 1e-12)


def test_adam_converges_on_quadratic():
    store = nn.ParamStore()
    w = store.add("w", 1.0)
    cfg = nn.AdamConfig(lr=0.05)
    for _ in range(200):
        nn.optimizer_step(store, nn.backward(ad.square(w), store), cfg)
    assert abs(store["w"].data) < 1e-2


def test_adam_rejects_nan_gradient():
    store = nn.ParamStore()
    store.add("w", 1.0)
    with pytest.raises(nn.GradientError):
        nn.optimizer_step(store, {"w": np.array(np.nan)})


def test_checkpoint_round_trip_bytes():
    rng = np.random.default_rng(2)
    store = nn.ParamStore()
    nn.init_mlp(store, "enc", nn.MLPSpec((5, 3), ("tanh",)), rng)
    store.add("prototype.mean", rng.normal(size=(2, 3)) * 1e-300)
    store.add("odd", np.array([1 / 3, -0.0, 1e308, 5e-324]))
    store.meta["note"] = {"k": [1, 2]}
    nn.optimizer_step(store, {n: rng.normal(size=store[n].shape) for n in store}, nn.AdamConfig())
    text = nn.dumps_checkpoint(store)
    again = nn.loads_checkpoint(text)
    assert nn.dumps_checkpoint(again) == text
    for n in store:
        assert np.array_equal(store[n].data, again[n].data)


def test_checkpoint_bad_header():
    with pytest.raises(ValueError):
        nn.loads_checkpoint("nonsense\n")

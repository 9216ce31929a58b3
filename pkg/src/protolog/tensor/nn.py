"""Parameters, multilayer perceptrons, Adam and the checkpoint format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = "protolog-checkpoint v1"

ACTIVATIONS = {
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "linear": lambda x: x,
    "identity": lambda x: x,
}


class ParamStore:
    """Named parameter tensors plus optional Adam state.

    Parameter order is insertion order; it fixes the checkpoint layout.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.meta: dict = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, data) -> Tensor:
        if name in ("meta", "adam.step") or name.startswith("adam.") or " " in name:
            raise KeyError(f"reserved or invalid parameter name {name!r}")
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = ad.parameter(data, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for n, p in self.params.items():
            out.add(n, p.data.copy())
        out.meta = json.loads(json.dumps(self.meta))
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.step = self.step
        return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass(frozen=True)
class MLPSpec:
    sizes: tuple
    activations: tuple

    def __post_init__(self):
        if len(self.activations) != len(self.sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")


def init_mlp(store: ParamStore, prefix: str, spec: MLPSpec, rng: np.random.Generator) -> None:
    for i, (n_in, n_out) in enumerate(zip(spec.sizes, spec.sizes[1:])):
        store.add(f"{prefix}.{i}.weight", glorot_uniform(rng, n_in, n_out))
        store.add(f"{prefix}.{i}.bias", np.zeros(n_out))


def mlp_forward(store: ParamStore, prefix: str, x, spec: MLPSpec) -> Tensor:
    """Affine + activation chain.  ``x`` is ``(in,)`` or ``(batch, in)``."""
    h = ad.as_tensor(x)
    if h.shape[-1] != spec.sizes[0]:
        raise ValueError(f"input width {h.shape[-1]} does not match layer width {spec.sizes[0]}")
    for i, act in enumerate(spec.activations):
        w = store[f"{prefix}.{i}.weight"]
        b = store[f"{prefix}.{i}.bias"]
        h = ACTIVATIONS[act](ad.add(ad.matmul(h, w), b))
    return h


def backward(loss: Tensor, store: ParamStore) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss for every parameter (zeros where unreached)."""
    if loss.data.size != 1:
        raise ValueError("backward() expects a scalar loss")
    store.zero_grad()
    loss.backward()
    out = {}
    for name, p in store.params.items():
        out[name] = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    return out


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class GradientError(FloatingPointError):
    pass


def optimizer_step(store: ParamStore, grads: dict[str, np.ndarray], cfg: AdamConfig | None = None,
                   frozen: tuple = ()) -> ParamStore:
    """One bias-corrected Adam update, in place; returns ``store``."""
    cfg = cfg or AdamConfig()
    for name, g in grads.items():
        if name not in store.params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != store[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter {name!r}")
    store.step += 1
    t = store.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, g in grads.items():
        if name in frozen:
            continue
        p = store[name]
        m = store.adam_m.get(name)
        v = store.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        store.adam_m[name] = m
        store.adam_v[name] = v
        p.data = p.data - cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return store


# --- checkpoint ------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_array(lines: list, key: str, arr: np.ndarray) -> None:
    shape = "x".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
    lines.append(f"{key} {shape} " + " ".join(_fmt(x) for x in arr.ravel()))


def dumps_checkpoint(store: ParamStore, include_optimizer: bool = True) -> str:
    lines = [CHECKPOINT_MAGIC]
    lines.append("meta " + json.dumps(store.meta, sort_keys=True, separators=(",", ":")))
    for name, p in store.params.items():
        _write_array(lines, name, p.data)
    if include_optimizer and store.adam_m:
        lines.append(f"adam.step {store.step}")
        for name in store.params:
            if name in store.adam_m:
                _write_array(lines, "adam.m." + name, store.adam_m[name])
                _write_array(lines, "adam.v." + name, store.adam_v[name])
    return "\n".join(lines) + "\n"


def _read_array(parts: list[str]) -> np.ndarray:
    shape_s = parts[0]
    shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split("x"))
    data = np.array([float(x) for x in parts[1:]], dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ValueError(f"checkpoint entry has {data.size} values, shape needs {expected}")
    return data.reshape(shape)


def loads_checkpoint(text: str) -> ParamStore:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ValueError("not a protolog checkpoint (bad header)")
    store = ParamStore()
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        if key == "meta":
            store.meta = json.loads(rest)
        elif key == "adam.step":
            store.step = int(rest)
        elif key.startswith("adam.m."):
            store.adam_m[key[len("adam.m."):]] = _read_array(rest.split())
        elif key.startswith("adam.v."):
            store.adam_v[key[len("adam.v."):]] = _read_array(rest.split())
        else:
            store.add(key, _read_array(rest.split()))
    return store


def save_checkpoint(store: ParamStore, path, include_optimizer: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_checkpoint(store, include_optimizer))


def load_checkpoint(path) -> ParamStore:
    with open(path, encoding="utf-8") as f:
        return loads_checkpoint(f.read())


__all__ = [
    "AdamConfig", "GradientError", "MLPSpec", "ParamStore", "backward", "dumps_checkpoint",
    "glorot_uniform", "init_mlp", "load_checkpoint", "loads_checkpoint", "mlp_forward",
    "optimizer_step", "save_checkpoint",
]

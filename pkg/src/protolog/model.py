"""Encoder, decoder and prototype table held in one parameter store."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import proto
from .tensor import autodiff as ad
from .tensor import nn

MEAN_KEY = "prototype.mean"
LOG_STD_KEY = "prototype.log_std"
LABELS_KEY = "prototype.labels"


@dataclass
class ModelConfig:
    num_prototypes: int = 10
    latent_dim: int = 8
    hidden: int = 64
    image_shape: tuple = (16, 16)
    temperature: float = 1.0
    seed: int = 0
    symmetric: bool = False
    labels: tuple | None = None

    def __post_init__(self):
        self.image_shape = tuple(self.image_shape)
        if self.labels is not None:
            self.labels = tuple(self.labels)
        for name in ("num_prototypes", "latent_dim", "hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def image_size(self) -> int:
        return int(np.prod(self.image_shape))


@dataclass
class Model:
    config: ModelConfig
    store: nn.ParamStore = field(repr=False)

    @classmethod
    def create(cls, config: ModelConfig | None = None) -> "Model":
        cfg = config or ModelConfig()
        rng = np.random.default_rng([cfg.seed, 0x5eed])
        store = nn.ParamStore()
        nn.init_mlp(store, "encoder", cls._enc_spec(cfg), rng)
        nn.init_mlp(store, "decoder", cls._dec_spec(cfg), rng)
        k, dim = cfg.num_prototypes, cfg.latent_dim
        means = np.zeros((k, dim)) if cfg.symmetric else rng.standard_normal((k, dim))
        store.add(MEAN_KEY, means)
        store.add(LOG_STD_KEY, np.zeros((k, dim)))
        labels = cfg.labels if cfg.labels is not None else tuple(range(k))
        if len(labels) != k:
            raise ValueError("need exactly one label per prototype")
        store.add(LABELS_KEY, np.array(labels, dtype=np.float64))
        store.meta["model"] = _config_json(cfg)
        return cls(cfg, store)

    @staticmethod
    def _enc_spec(cfg: ModelConfig) -> nn.MLPSpec:
        return nn.MLPSpec((cfg.image_size, cfg.hidden, 2 * cfg.latent_dim), ("tanh", "linear"))

    @staticmethod
    def _dec_spec(cfg: ModelConfig) -> nn.MLPSpec:
        return nn.MLPSpec((cfg.latent_dim, cfg.hidden, cfg.image_size), ("tanh", "sigmoid"))

    # structure ----------------------------------------------------------

    @property
    def num_prototypes(self) -> int:
        return self.config.num_prototypes

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def means(self) -> ad.Tensor:
        return self.store[MEAN_KEY]

    @property
    def log_stds(self) -> ad.Tensor:
        return self.store[LOG_STD_KEY]

    @property
    def labels(self) -> list:
        return [int(x) if float(x).is_integer() else float(x) for x in self.store[LABELS_KEY].data]

    def label_index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no prototype is associated with label {label!r}") from None

    def prototype(self, label) -> proto.Prototype:
        j = self.label_index(label)
        return proto.Prototype(j, ad.index(self.means, j), ad.index(self.log_stds, j), label)

    # networks -----------------------------------------------------------

    def _flat(self, images) -> ad.Tensor:
        x = ad.as_tensor(images)
        n = self.config.image_size
        if x.data.ndim >= 1 and x.shape[-1] == n:
            return x
        if x.data.ndim >= 2 and x.shape[-2:] == self.config.image_shape:
            return ad.reshape(x, x.shape[:-2] + (n,))
        raise ValueError(f"image tensor of shape {x.shape} does not fit {self.config.image_shape}")

    def encode_params(self, images) -> tuple[ad.Tensor, ad.Tensor]:
        """Posterior ``(mean, log_std)`` for one image or a batch."""
        out = nn.mlp_forward(self.store, "encoder", self._flat(images), self._enc_spec(self.config))
        dim = self.latent_dim
        mean = ad.index(out, (..., slice(0, dim)))
        log_var = ad.index(out, (..., slice(dim, 2 * dim)))
        return mean, ad.mul(log_var, 0.5)

    def encode(self, images) -> ad.Tensor:
        """Latent code: the posterior mean."""
        return self.encode_params(images)[0]

    def posterior(self, image) -> proto.PosteriorGaussian:
        mean, log_std = self.encode_params(image)
        return proto.PosteriorGaussian(mean, log_std)

    def decode(self, z) -> ad.Tensor:
        return nn.mlp_forward(self.store, "decoder", z, self._dec_spec(self.config))

    def membership(self, images) -> ad.Tensor:
        return proto.membership_distribution(self.encode(images), (self.means, self.log_stds),
                                             self.config.temperature)

    def sample_latents(self, rows, eps) -> ad.Tensor:
        """Reparameterised samples of prototypes ``rows`` with noise ``eps``."""
        rows = np.asarray(rows, dtype=np.intp)
        mean = ad.take_rows(self.means, rows)
        std = proto.floored_std(ad.take_rows(self.log_stds, rows))
        return ad.add(mean, ad.mul(std, eps))

    # persistence --------------------------------------------------------

    def save(self, path, include_optimizer: bool = True) -> None:
        nn.save_checkpoint(self.store, path, include_optimizer)

    @classmethod
    def from_store(cls, store: nn.ParamStore) -> "Model":
        raw = store.meta.get("model")
        if raw is None:
            raise ValueError("checkpoint carries no model configuration")
        cfg = ModelConfig(**raw)
        for key in (MEAN_KEY, LOG_STD_KEY, LABELS_KEY):
            if key not in store:
                raise ValueError(f"checkpoint is missing {key}")
        return cls(cfg, store)

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_store(nn.load_checkpoint(path))

    def copy(self) -> "Model":
        return Model(self.config, self.store.copy())


def _config_json(cfg: ModelConfig) -> dict:
    out = asdict(cfg)
    out["image_shape"] = list(cfg.image_shape)
    if cfg.labels is not None:
        out["labels"] = list(cfg.labels)
    return out


__all__ = ["LABELS_KEY", "LOG_STD_KEY", "MEAN_KEY", "Model", "ModelConfig"]

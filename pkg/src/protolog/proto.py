"""Gaussian prototypes in latent space.

Each class owns a diagonal Gaussian.  An instance's latent code is
scored against every prototype by log-density; a tempered softmax over
those scores is the class membership distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import autodiff as ad
from .tensor.autodiff import Tensor

STD_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Prototype:
    id: int
    mean: Tensor
    log_std: Tensor
    label: object = None

    def __post_init__(self):
        self.mean = ad.as_tensor(self.mean)
        self.log_std = ad.as_tensor(self.log_std)
        if self.mean.shape != self.log_std.shape:
            raise ValueError("prototype mean and log_std differ in shape")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def std(self) -> np.ndarray:
        return np.maximum(np.exp(self.log_std.data), STD_FLOOR)


@dataclass
class PosteriorGaussian:
    mean: Tensor
    log_std: Tensor

    def __post_init__(self):
        self.mean = ad.as_tensor(self.mean)
        self.log_std = ad.as_tensor(self.log_std)
        if self.mean.shape != self.log_std.shape:
            raise ValueError("posterior mean and log_std differ in shape")


def floored_std(log_std) -> Tensor:
    """``exp(log_std)`` with the density floor applied."""
    return ad.clamp(ad.exp(log_std), STD_FLOOR, np.inf)


def sample_prototype(p: Prototype, rng: np.random.Generator) -> Tensor:
    """Reparameterised draw ``mean + std * eps``."""
    eps = rng.standard_normal(p.mean.shape)
    return ad.add(p.mean, ad.mul(floored_std(p.log_std), eps))


def _check_dims(a: Tensor, b: Tensor):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"latent dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def gaussian_log_density(z, mean, log_std) -> Tensor:
    """Diagonal Gaussian log-density over the last axis, std floored."""
    z, mean, log_std = ad.as_tensor(z), ad.as_tensor(mean), ad.as_tensor(log_std)
    _check_dims(z, mean)
    std = floored_std(log_std)
    r = ad.div(ad.sub(z, mean), std)
    per = -0.5 * LOG_2PI - ad.log(std) - 0.5 * ad.square(r)
    return ad.tsum(per, -1)


def latent_log_density(p: Prototype, z) -> Tensor:
    return gaussian_log_density(z, p.mean, p.log_std)


def log_density_matrix(z, means, log_stds) -> Tensor:
    """``(N, K)`` log-densities of ``N`` latents under ``K`` prototypes."""
    z = ad.as_tensor(z)
    means, log_stds = ad.as_tensor(means), ad.as_tensor(log_stds)
    _check_dims(z, means)
    n, dim = z.shape
    k = means.shape[0]
    zz = ad.reshape(z, (n, 1, dim))
    mm = ad.reshape(means, (1, k, dim))
    ss = ad.reshape(log_stds, (1, k, dim))
    return gaussian_log_density(zz, mm, ss)


def _stack_protos(prototypes):
    if isinstance(prototypes, tuple) and len(prototypes) == 2:
        return ad.as_tensor(prototypes[0]), ad.as_tensor(prototypes[1])
    return ad.stack([p.mean for p in prototypes]), ad.stack([p.log_std for p in prototypes])


def membership_distribution(z, prototypes, temperature: float = 1.0) -> Tensor:
    """Softmax over prototype log-densities divided by ``temperature``.

    ``prototypes`` is a list of :class:`Prototype` or a ``(means, log_stds)``
    pair of ``(K, L)`` arrays.  ``z`` may be ``(L,)`` or ``(N, L)``.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    means, log_stds = _stack_protos(prototypes)
    z = ad.as_tensor(z)
    single = z.data.ndim == 1
    zz = ad.reshape(z, (1, z.shape[0])) if single else z
    logits = ad.mul(log_density_matrix(zz, means, log_stds), 1.0 / temperature)
    out = ad.softmax(logits, axis=-1)
    return ad.reshape(out, (means.shape[0],)) if single else out


def kl_diag(mean_a, log_std_a, mean_b, log_std_b) -> Tensor:
    """``KL(a || b)`` for diagonal Gaussians, summed over the last axis."""
    sa, sb = floored_std(log_std_a), floored_std(log_std_b)
    var_a, var_b = ad.square(sa), ad.square(sb)
    diff = ad.sub(mean_a, mean_b)
    per = ad.log(sb) - ad.log(sa) + ad.div(var_a + ad.square(diff), 2.0 * var_b) - 0.5
    return ad.tsum(per, -1)


def kl_prototype_posterior(p: Prototype, q: PosteriorGaussian) -> Tensor:
    """``KL(p(z|d) || q(z|X))``."""
    _check_dims(p.mean, q.mean)
    return kl_diag(p.mean, p.log_std, q.mean, q.log_std)


def kl_posterior_prototype(q: PosteriorGaussian, p: Prototype) -> Tensor:
    """``KL(q(z|X) || p(z|d))``, the direction that makes the ELBO a bound."""
    _check_dims(p.mean, q.mean)
    return kl_diag(q.mean, q.log_std, p.mean, p.log_std)


def unit_gaussian_loglik(x, recon) -> Tensor:
    """``log N(x; recon, I)`` summed over pixels."""
    x, recon = ad.as_tensor(x), ad.as_tensor(recon)
    d = x.data.size
    return -0.5 * d * LOG_2PI - 0.5 * ad.tsum(ad.square(ad.sub(x, recon)))


def elbo(image, label, model, rng: np.random.Generator) -> Tensor:
    """One-sample evidence lower bound on ``log p(X, d)``.

    ``model`` provides ``num_prototypes``, ``prototype(label)``,
    ``posterior(image)`` and ``decode(z)``.  The prior over classes is
    uniform and pixels are unit-variance Gaussians around the decoding.
    """
    p = model.prototype(label)
    q = model.posterior(image)
    eps = rng.standard_normal(q.mean.shape)
    z = ad.add(q.mean, ad.mul(floored_std(q.log_std), eps))
    recon = model.decode(z)
    log_prior = -math.log(model.num_prototypes)
    return log_prior + unit_gaussian_loglik(image, recon) - kl_posterior_prototype(q, p)


class LinearGaussianToy:
    """Scalar latent, linear decoder ``x = a z + b`` with unit pixel noise.

    Everything is available in closed form: the marginal likelihood, the
    exact posterior and the expected reconstruction term, so the ELBO can
    be compared with the true log-likelihood without sampling error.
    """

    def __init__(self, a, b, prior_mean: float, prior_log_std: float, num_classes: int = 1):
        self.a = np.asarray(a, dtype=np.float64).reshape(-1)
        self.b = np.asarray(b, dtype=np.float64).reshape(-1)
        self.mu = float(prior_mean)
        self.log_std = float(prior_log_std)
        self.num_classes = num_classes

    @property
    def prior_var(self) -> float:
        return math.exp(2.0 * self.log_std)

    def log_joint(self, x) -> float:
        """Exact ``log p(X, d)`` with a uniform class prior."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        d = x.size
        cov = self.prior_var * np.outer(self.a, self.a) + np.eye(d)
        r = x - (self.a * self.mu + self.b)
        _, logdet = np.linalg.slogdet(cov)
        quad = r @ np.linalg.solve(cov, r)
        return -math.log(self.num_classes) - 0.5 * (d * LOG_2PI + logdet + quad)

    def posterior(self, x) -> tuple[float, float]:
        """Exact posterior ``(mean, log_std)`` of the latent."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        prec = 1.0 / self.prior_var + self.a @ self.a
        mean = (self.mu / self.prior_var + self.a @ (x - self.b)) / prec
        return mean, -0.5 * math.log(prec)

    def elbo(self, x, q_mean: float, q_log_std: float) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        d = x.size
        q_var = math.exp(2.0 * q_log_std)
        r = x - self.a * q_mean - self.b
        expected = -0.5 * d * LOG_2PI - 0.5 * (r @ r + (self.a @ self.a) * q_var)
        p = Prototype(0, np.array([self.mu]), np.array([self.log_std]))
        q = PosteriorGaussian(np.array([q_mean]), np.array([q_log_std]))
        kl = float(kl_posterior_prototype(q, p).data)
        return -math.log(self.num_classes) + expected - kl


__all__ = [
    "LinearGaussianToy", "PosteriorGaussian", "Prototype", "STD_FLOOR", "elbo", "floored_std",
    "gaussian_log_density", "kl_diag", "kl_posterior_prototype", "kl_prototype_posterior",
    "latent_log_density", "log_density_matrix", "membership_distribution", "sample_prototype",
    "unit_gaussian_loglik",
]

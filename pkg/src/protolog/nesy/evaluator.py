"""Batched evaluation of tensor recipes and probability factors.

A recipe key is resolved relative to a query index ``q``: images come
from that query's environment and prototype samples from its noise
stream.  Work is grouped by recipe depth so each network runs once per
level over every query in the batch.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .. import proto
from ..logic.terms import Prob
from ..tensor import autodiff as ad

LEAF_HEADS = ("img", "ph")


@dataclass
class QueryEnv:
    """Inputs of one query: image arrays by key and the noise seed."""

    images: Mapping = field(default_factory=dict)
    seed: tuple = (0,)


def recipe_depth(key) -> int:
    d = 0
    while key[0] in ("enc", "dec"):
        key = key[1]
        d += 1
    return d


class RecipeEvaluator:
    def __init__(self, model, envs):
        self.model = model
        self.envs = list(envs)
        self._rows: dict = {}
        self._tables: list = []
        self._eps: dict = {}

    def noise(self, q: int) -> np.ndarray:
        """Standard-normal ``(K, L)`` matrix for query ``q``, one row per prototype."""
        e = self._eps.get(q)
        if e is None:
            rng = np.random.default_rng(list(self.envs[q].seed))
            e = rng.standard_normal((self.model.num_prototypes, self.model.latent_dim))
            self._eps[q] = e
        return e

    def _leaf(self, q: int, key) -> np.ndarray:
        try:
            arr = self.envs[q].images[key]
        except KeyError:
            raise KeyError(f"no image bound to {key!r}") from None
        arr = np.asarray(arr, dtype=np.float64)
        n = self.model.config.image_size
        if arr.size != n or arr.shape not in ((n,), self.model.config.image_shape):
            raise ValueError(f"image tensor of shape {arr.shape} does not fit "
                             f"{self.model.config.image_shape}")
        return arr.reshape(n)

    # recipe tables -------------------------------------------------------

    def ensure(self, items) -> None:
        todo = set()
        stack = list(items)
        while stack:
            it = stack.pop()
            if it in self._rows or it in todo:
                continue
            todo.add(it)
            if it[1][0] in ("enc", "dec"):
                stack.append((it[0], it[1][1]))
        levels = defaultdict(list)
        for it in todo:
            levels[recipe_depth(it[1])].append(it)
        for d in sorted(levels):
            groups = defaultdict(list)
            for it in sorted(levels[d], key=repr):
                groups[it[1][0]].append(it)
            for head in sorted(groups):
                self._compute(head, groups[head])

    def _compute(self, head: str, items) -> None:
        m = self.model
        if head in LEAF_HEADS:
            table = ad.Tensor(np.stack([self._leaf(q, k) for q, k in items]))
        elif head == "sample":
            rows = [k[1] for _, k in items]
            eps = np.stack([self.noise(q)[k[1]] for q, k in items])
            table = m.sample_latents(rows, eps)
        elif head == "enc":
            table = m.encode(self.gather([(q, k[1]) for q, k in items]))
        elif head == "dec":
            table = m.decode(self.gather([(q, k[1]) for q, k in items]))
        else:
            raise ValueError(f"unknown tensor recipe {head!r}")
        t = len(self._tables)
        self._tables.append(table)
        for r, it in enumerate(items):
            self._rows[it] = (t, r)

    def gather(self, items) -> ad.Tensor:
        """Rows for ``items`` (``(q, key)`` pairs) stacked in order."""
        self.ensure(items)
        locs = [self._rows[it] for it in items]
        tables = sorted({t for t, _ in locs})
        if len(tables) == 1:
            return ad.take_rows(self._tables[tables[0]], [r for _, r in locs])
        parts, offset, base = [], 0, {}
        for t in tables:
            rows = sorted({r for tt, r in locs if tt == t})
            base[t] = {r: offset + i for i, r in enumerate(rows)}
            offset += len(rows)
            parts.append(ad.take_rows(self._tables[t], rows))
        return ad.take_rows(ad.concat(parts), [base[t][r] for t, r in locs])

    def value(self, q: int, key) -> np.ndarray:
        """Numeric value of one recipe (images come back in image shape)."""
        data = self.gather([(q, key)]).data[0]
        if key[0] in ("img", "ph", "dec"):
            return data.reshape(self.model.config.image_shape)
        return data

    # probabilities -------------------------------------------------------

    def literal_probs(self, entries) -> ad.Tensor:
        """Probabilities for ``(q, prob)`` entries; ``prob`` is a number or :class:`Prob`."""
        consts = np.empty(len(entries))
        per_lit: list = []
        index: dict = {}
        members: list = []
        sims: list = []
        for n, (q, p) in enumerate(entries):
            if type(p) is Prob:
                consts[n] = p.const
                fs = []
                for f in p.factors:
                    fk = (q, f)
                    slot = index.get(fk)
                    if slot is None:
                        if f[0] == "member":
                            slot = index[fk] = ("m", len(members))
                            members.append(fk)
                        elif f[0] == "sim":
                            slot = index[fk] = ("s", len(sims))
                            sims.append(fk)
                        else:
                            raise ValueError(f"unknown probability factor {f[0]!r}")
                    fs.append(slot)
                per_lit.append(fs)
            else:
                consts[n] = float(p)
                per_lit.append([])
        if not members and not sims:
            return ad.Tensor(consts)
        vectors = []
        if members:
            vectors.append(self._members(members))
        if sims:
            vectors.append(self._sims(sims))
        factors = ad.concat(vectors)
        nm = len(members)
        width = max(len(fs) for fs in per_lit)
        pad = factors.shape[0]
        idx = np.full((len(entries), max(width, 1)), pad, dtype=np.intp)
        for n, fs in enumerate(per_lit):
            for c, (kind, i) in enumerate(fs):
                idx[n, c] = i if kind == "m" else nm + i
        return factor_products(factors, idx, consts)

    def _members(self, members) -> ad.Tensor:
        latents = sorted({(q, f[2]) for q, f in members}, key=repr)
        pos = {it: i for i, it in enumerate(latents)}
        z = self.gather(latents)
        m = self.model
        logits = ad.mul(proto.log_density_matrix(z, m.means, m.log_stds), 1.0 / m.config.temperature)
        logq = ad.log_softmax(logits, axis=-1)
        rows = [pos[(q, f[2])] for q, f in members]
        cols = [f[1] for _, f in members]
        return ad.exp(ad.gather(logq, rows, cols))

    def _sims(self, sims) -> ad.Tensor:
        a = self.gather([(q, f[1]) for q, f in sims])
        b = self.gather([(q, f[2]) for q, f in sims])
        return ad.clamp(1.0 - ad.mse(a, b, axis=1), 0.0, 1.0)


def factor_products(factors: ad.Tensor, idx: np.ndarray, consts: np.ndarray) -> ad.Tensor:
    """``consts[n] * prod_c factors[idx[n, c]]``; index ``len(factors)`` means 1."""
    fv = np.append(factors.data, 1.0)
    cols = fv[idx]
    out = consts * cols.prod(axis=1)

    def bw(g):
        n, w = cols.shape
        prefix = np.ones((n, w))
        suffix = np.ones((n, w))
        for c in range(1, w):
            prefix[:, c] = prefix[:, c - 1] * cols[:, c - 1]
            suffix[:, w - 1 - c] = suffix[:, w - c] * cols[:, w - c]
        local = (g * consts)[:, None] * prefix * suffix
        gf = np.zeros(fv.shape[0])
        np.add.at(gf, idx, local)
        return (gf[:-1],)

    return ad.custom(out, (factors,), bw)


__all__ = ["QueryEnv", "RecipeEvaluator", "factor_products", "recipe_depth"]

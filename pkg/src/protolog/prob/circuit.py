"""Compile a disjunction of proofs into an arithmetic circuit.

The probability of ``proof_1 or ... or proof_n`` is computed by Shannon
expansion over the annotated-disjunction variables.  Expanding variable
``v`` whose heads ``h_1..h_m`` occur in the formula gives

    P(F) = sum_j p(v=h_j) P(F | v=h_j) + (1 - sum_j p(v=h_j)) P(F | v not in {h_j})

Sub-formulas are memoised on their residual proof sets, so shared
structure is compiled once.  The result is a DAG of sum/product nodes
over literal probabilities which can be evaluated with gradients.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..tensor import autodiff as ad
from .proofs import check_consistent

CONST, LIT, SUM, PROD, NONE_OF = range(5)


class Circuit:
    """Arithmetic circuit: node list in topological order, root last.

    Node encodings: ``(CONST, c)``, ``(LIT, i)``, ``(SUM, children)``,
    ``(PROD, children)``, ``(NONE_OF, literal indices)`` meaning
    ``1 - sum of those literal probabilities``.
    """

    def __init__(self, nodes, literals, root):
        self.nodes = nodes
        self.literals = literals
        self.root = root

    def __len__(self):
        return len(self.nodes)

    def forward(self, leaf: np.ndarray) -> np.ndarray:
        vals = np.empty(len(self.nodes))
        for i, (kind, arg) in enumerate(self.nodes):
            if kind == LIT:
                vals[i] = leaf[arg]
            elif kind == SUM:
                vals[i] = sum(vals[c] for c in arg)
            elif kind == PROD:
                v = 1.0
                for c in arg:
                    v *= vals[c]
                vals[i] = v
            elif kind == NONE_OF:
                vals[i] = 1.0 - sum(leaf[j] for j in arg)
            else:
                vals[i] = arg
        return vals

    def backward(self, vals: np.ndarray, leaf: np.ndarray, g_root: float) -> np.ndarray:
        adj = np.zeros(len(self.nodes))
        adj[self.root] = g_root
        g_leaf = np.zeros(len(leaf))
        for i in range(len(self.nodes) - 1, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            kind, arg = self.nodes[i]
            if kind == LIT:
                g_leaf[arg] += a
            elif kind == SUM:
                for c in arg:
                    adj[c] += a
            elif kind == PROD:
                # product rule without dividing (values may be zero)
                n = len(arg)
                prefix = 1.0
                pre = [0.0] * n
                for k in range(n):
                    pre[k] = prefix
                    prefix *= vals[arg[k]]
                suffix = 1.0
                for k in range(n - 1, -1, -1):
                    adj[arg[k]] += a * pre[k] * suffix
                    suffix *= vals[arg[k]]
            elif kind == NONE_OF:
                for j in arg:
                    g_leaf[j] -= a
        return g_leaf

    def value(self, leaf) -> float:
        leaf = np.asarray(leaf, dtype=np.float64)
        return float(self.forward(leaf)[self.root])


def _lit_sort_key(lit):
    return (repr(lit.key), lit.head)


def compile_proofs(proofs) -> Circuit:
    """Compile a list of proof sets into a :class:`Circuit`."""
    proofs = [frozenset(p) for p in proofs]
    for p in proofs:
        check_consistent(p)
    literals = sorted({lit for p in proofs for lit in p}, key=_lit_sort_key)
    lit_index = {(lit.key, lit.head): i for i, lit in enumerate(literals)}
    var_rank: dict = {}
    for lit in literals:
        var_rank.setdefault(lit.key, len(var_rank))

    # formula: frozenset of frozensets of literal indices
    lit_key = [lit.key for lit in literals]
    lit_head = [lit.head for lit in literals]
    formula = frozenset(frozenset(lit_index[(l.key, l.head)] for l in p) for p in proofs)

    nodes: list = []
    memo: dict = {}
    const_nodes: dict = {}

    def const(c: float) -> int:
        n = const_nodes.get(c)
        if n is None:
            nodes.append((CONST, c))
            n = const_nodes[c] = len(nodes) - 1
        return n

    def absorb(f: frozenset) -> frozenset:
        # drop proofs that are supersets of another proof
        ps = sorted(f, key=len)
        kept: list = []
        for p in ps:
            if not any(q <= p for q in kept):
                kept.append(p)
        return frozenset(kept)

    def rec(f: frozenset) -> int:
        if not f:
            return const(0.0)
        if frozenset() in f:
            return const(1.0)
        hit = memo.get(f)
        if hit is not None:
            return hit
        counts = Counter(lit_key[i] for p in f for i in p)
        var = min(counts, key=lambda k: (-counts[k], var_rank[k]))
        heads = sorted({i for p in f for i in p if lit_key[i] == var}, key=lambda i: lit_head[i])
        terms = []
        for li in heads:
            cond = []
            for p in f:
                other = [i for i in p if lit_key[i] == var]
                if not other:
                    cond.append(p)
                elif other[0] == li:
                    cond.append(p - {li})
            sub = rec(absorb(frozenset(cond)))
            if nodes[sub] == (CONST, 0.0):
                continue
            nodes.append((LIT, li))
            lnode = len(nodes) - 1
            if nodes[sub] == (CONST, 1.0):
                terms.append(lnode)
            else:
                nodes.append((PROD, (lnode, sub)))
                terms.append(len(nodes) - 1)
        rest = frozenset(p for p in f if not any(lit_key[i] == var for i in p))
        sub = rec(rest)
        if nodes[sub] != (CONST, 0.0):
            nodes.append((NONE_OF, tuple(heads)))
            nnode = len(nodes) - 1
            if nodes[sub] == (CONST, 1.0):
                terms.append(nnode)
            else:
                nodes.append((PROD, (nnode, sub)))
                terms.append(len(nodes) - 1)
        if not terms:
            out = const(0.0)
        elif len(terms) == 1:
            out = terms[0]
        else:
            nodes.append((SUM, tuple(terms)))
            out = len(nodes) - 1
        memo[f] = out
        return out

    root = rec(absorb(formula))
    return Circuit(nodes, literals, root)


def evaluate_circuit(circuit: Circuit, leaf: ad.Tensor) -> ad.Tensor:
    """Differentiable evaluation of ``circuit`` given its literal probabilities."""
    leaf = ad.as_tensor(leaf)
    lv = leaf.data.reshape(-1)
    vals = circuit.forward(lv)

    def bw(g):
        return (circuit.backward(vals, lv, float(g)).reshape(leaf.shape),)

    return ad.custom(vals[circuit.root], (leaf,), bw)


def evaluate_circuits(circuits, leaf: ad.Tensor, offsets) -> ad.Tensor:
    """Evaluate several circuits whose literals occupy ``leaf[offset:offset+n]``.

    Returns a vector with one probability per circuit.
    """
    leaf = ad.as_tensor(leaf)
    lv = leaf.data
    cache = []
    out = np.empty(len(circuits))
    for k, (c, off) in enumerate(zip(circuits, offsets)):
        sl = lv[off:off + len(c.literals)]
        vals = c.forward(sl)
        cache.append((vals, sl))
        out[k] = vals[c.root]

    def bw(g):
        gl = np.zeros_like(lv)
        for k, (c, off) in enumerate(zip(circuits, offsets)):
            if g[k] == 0.0:
                continue
            vals, sl = cache[k]
            gl[off:off + len(c.literals)] += c.backward(vals, sl, float(g[k]))
        return (gl,)

    return ad.custom(out, (leaf,), bw)

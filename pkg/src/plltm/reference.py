"""Plain-Python LDA and polylingual (PLTM) collapsed Gibbs samplers.

Written straight from the textbook conditionals, without label masks, flat
token layouts or compiled kernels. They draw uniforms from the numpy Generator
in the same order as the main sampler (one per token at initialisation, then
one per token per sweep), so under full label masks and the same seed their
trajectories must agree with it bit for bit.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np


def _pick(weights: list[float], u: float) -> int:
    total = 0.0
    cum = []
    for w in weights:
        total += w
        cum.append(total)
    r = u * total
    for k, c in enumerate(cum):
        if c > r:
            return k
    return len(weights) - 1


class PolylingualSampler:
    """Collapsed Gibbs for PLTM; with one language this is ordinary LDA."""

    def __init__(self, docs: Sequence[Sequence[Sequence[int]]], vocab_sizes: Sequence[int], K: int,
                 alpha: float, beta: Sequence[float], rng: np.random.Generator):
        self.docs = [[list(map(int, block)) for block in doc] for doc in docs]
        self.V = list(vocab_sizes)
        self.L = len(self.V)
        self.K = K
        self.alpha = alpha
        self.beta = list(beta)
        self.rng = rng
        n_tokens = sum(len(b) for doc in self.docs for b in doc)
        u = iter(rng.random(n_tokens).tolist())
        self.n_dk = [[0] * K for _ in self.docs]
        self.n_kt = [[[0] * V for _ in range(K)] for V in self.V]
        self.n_k = [[0] * K for _ in range(self.L)]
        self.z = []
        for d, doc in enumerate(self.docs):
            zd = []
            for l, block in enumerate(doc):
                zl = []
                for t in block:
                    k = min(int(next(u) * K), K - 1)
                    zl.append(k)
                    self.n_dk[d][k] += 1
                    self.n_kt[l][k][t] += 1
                    self.n_k[l][k] += 1
                zd.append(zl)
            self.z.append(zd)
        self.n_tokens = n_tokens

    def conditional(self, d: int, l: int, t: int) -> list[float]:
        """Unnormalised weights for one token whose counts were already removed."""
        b = self.beta[l]
        vb = self.V[l] * b
        return [(self.n_dk[d][k] + self.alpha) * (self.n_kt[l][k][t] + b) / (self.n_k[l][k] + vb)
                for k in range(self.K)]

    def sweep(self) -> None:
        u = iter(self.rng.random(self.n_tokens).tolist())
        for d, doc in enumerate(self.docs):
            for l, block in enumerate(doc):
                zl = self.z[d][l]
                for i, t in enumerate(block):
                    k = zl[i]
                    self.n_dk[d][k] -= 1
                    self.n_kt[l][k][t] -= 1
                    self.n_k[l][k] -= 1
                    k = _pick(self.conditional(d, l, t), next(u))
                    zl[i] = k
                    self.n_dk[d][k] += 1
                    self.n_kt[l][k][t] += 1
                    self.n_k[l][k] += 1

    def flat_z(self) -> np.ndarray:
        return np.array([k for zd in self.z for zl in zd for k in zl], dtype=np.int64)


def lda_sampler(docs: Sequence[Sequence[int]], V: int, K: int, alpha: float, beta: float,
                rng: np.random.Generator) -> PolylingualSampler:
    return PolylingualSampler([[doc] for doc in docs], [V], K, alpha, [beta], rng)


def lda_conditional(n_dk, n_kt_col, n_k, n_d, alpha: float, beta: float, V: int) -> np.ndarray:
    """The standard normalised LDA collapsed conditional given counts that exclude the token."""
    K = len(n_dk)
    w = [(n_dk[k] + alpha) / (n_d + K * alpha) * (n_kt_col[k] + beta) / (n_k[k] + V * beta) for k in range(K)]
    s = sum(w)
    return np.array([x / s for x in w])

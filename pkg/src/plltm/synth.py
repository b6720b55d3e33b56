"""Synthetic corpora with known topics, a brute-force posterior oracle, and topic matching."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .binfmt import read_container, write_container
from .corpus import Corpus, Document, Vocabulary
from .model import LabelMask, ModelConfig, build_label_mask

TRUTH_MAGIC = b"PLLTMGTR"
MAX_ENUMERATION = 10**6


@dataclass
class GroundTruth:
    phi_true: list[np.ndarray]
    theta_true: np.ndarray
    masks: LabelMask
    z_true: np.ndarray | None = None


def _sample_labels(K: int, mean: float, rng: np.random.Generator) -> np.ndarray:
    size = min(K, 1 + rng.poisson(max(mean - 1.0, 0.0)))
    return np.sort(rng.choice(K, size=size, replace=False))


def _truncated_poisson(mean: float, rng: np.random.Generator) -> int:
    while True:
        n = rng.poisson(mean)
        if n >= 1:
            return int(n)


def generate_corpus(
    K: int,
    L: int,
    vocab_sizes: Sequence[int],
    D: int,
    labels_per_doc_mean: float,
    doc_length_means: Sequence[float] | float,
    alpha: float,
    beta: Sequence[float] | float,
    rng: np.random.Generator,
    labeled: bool = True,
) -> tuple[Corpus, GroundTruth]:
    """Sample a corpus from the generative process.

    Label sets are uniform subsets of size 1 + Poisson(mean - 1) (capped at K).
    Per-language document lengths are Poisson, conditioned on being >= 1.
    With ``labeled=False`` documents carry no labels and every topic is
    permitted, which is plain LDA / PLTM generation.
    """
    if min(K, L, D) < 1 or len(vocab_sizes) != L or min(vocab_sizes) < 1:
        raise ValueError("all dimensions must be >= 1 and vocab_sizes must have L entries")
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (L,))
    lengths = np.broadcast_to(np.asarray(doc_length_means, dtype=float), (L,))

    phi = [rng.dirichlet(np.full(vocab_sizes[l], beta[l]), size=K) for l in range(L)]
    docs, thetas, permitted, z_all = [], [], [], []
    for d in range(D):
        labels = _sample_labels(K, labels_per_doc_mean, rng) if labeled else np.arange(K)
        theta = np.zeros(K)
        if len(labels) == 1:
            theta[labels[0]] = 1.0
        else:
            theta[labels] = rng.dirichlet(np.full(len(labels), alpha))
        tokens = []
        for l in range(L):
            n = _truncated_poisson(lengths[l], rng)
            z = rng.choice(K, size=n, p=theta)
            w = np.empty(n, np.int64)
            for k in np.unique(z):
                sel = z == k
                w[sel] = rng.choice(vocab_sizes[l], size=int(sel.sum()), p=phi[l][k])
            tokens.append(w)
            z_all.append(z)
        docs.append(Document(f"d{d}", tokens, labels if labeled else ()))
        thetas.append(theta)
        permitted.append(labels)
    vocabs = [Vocabulary(l, [f"l{l}w{t}" for t in range(vocab_sizes[l])]) for l in range(L)]
    corpus = Corpus(docs, vocabs, [f"label{k}" for k in range(K)])
    truth = GroundTruth(phi, np.array(thetas), LabelMask(permitted), np.concatenate(z_all) if z_all else None)
    return corpus, truth


def save_ground_truth(truth: GroundTruth, path) -> None:
    arrays = {f"phi{l}": p for l, p in enumerate(truth.phi_true)}
    arrays["theta"] = truth.theta_true
    arrays["mask_ptr"] = truth.masks.ptr
    arrays["mask_topics"] = truth.masks.topics
    if truth.z_true is not None:
        arrays["z"] = truth.z_true
    write_container(path, TRUTH_MAGIC, {"kind": "ground-truth", "L": len(truth.phi_true)}, arrays)


def load_ground_truth(path) -> GroundTruth:
    header, arrays = read_container(path, TRUTH_MAGIC)
    ptr, topics = arrays["mask_ptr"], arrays["mask_topics"]
    mask = LabelMask([topics[ptr[i]:ptr[i + 1]] for i in range(len(ptr) - 1)])
    phi = [arrays[f"phi{l}"] for l in range(header["L"])]
    return GroundTruth(phi, arrays["theta"], mask, arrays.get("z"))


def collapsed_log_joint(
    Z: np.ndarray,
    docs: np.ndarray,
    langs: np.ndarray,
    words: np.ndarray,
    permitted: Sequence[np.ndarray],
    vocab_sizes: Sequence[int],
    alpha: float,
    beta: Sequence[float],
    K: int,
) -> np.ndarray:
    """log p(z, w) with theta and phi integrated out, for each row of Z (shape M x N).

    The document factor uses the restricted Dirichlet(alpha * mu_d), whose total
    concentration is alpha * |permitted(d)|.
    """
    Z = np.atleast_2d(Z)
    M, N = Z.shape
    D = len(permitted)
    L = len(vocab_sizes)
    # compact word index: unused (language, word) pairs contribute zero
    pairs = sorted(set(zip(langs.tolist(), words.tolist())))
    col = {p: j for j, p in enumerate(pairs)}
    cols = np.array([col[(l, w)] for l, w in zip(langs.tolist(), words.tolist())], dtype=np.int64)
    col_lang = np.array([p[0] for p in pairs], dtype=np.int64)

    n_dk = np.zeros((M, D, K))
    n_kw = np.zeros((M, K, len(pairs)))
    n_lk = np.zeros((M, L, K))
    rows = np.arange(M)
    for i in range(N):
        n_dk[rows, docs[i], Z[:, i]] += 1
        n_kw[rows, Z[:, i], cols[i]] += 1
        n_lk[rows, langs[i], Z[:, i]] += 1

    logp = np.zeros(M)
    for d in range(D):
        allowed = np.asarray(permitted[d])
        a_total = alpha * len(allowed)
        n_d = n_dk[:, d, :].sum(axis=1)
        logp += gammaln(a_total) - gammaln(n_d + a_total)
        logp += (gammaln(n_dk[:, d, allowed] + alpha) - gammaln(alpha)).sum(axis=1)
    bcol = np.asarray(beta, dtype=float)[col_lang]
    logp += (gammaln(n_kw + bcol) - gammaln(bcol)).sum(axis=(1, 2))
    for l in range(L):
        vb = vocab_sizes[l] * beta[l]
        logp += (gammaln(vb) - gammaln(n_lk[:, l, :] + vb)).sum(axis=1)
    return logp


def exact_posterior(corpus: Corpus, config: ModelConfig, mask: LabelMask | None = None) -> dict[tuple[int, ...], float]:
    """Enumerate every admissible assignment vector and return its posterior probability.

    Tokens are ordered as the sampler stores them: by document, language, position.
    """
    if mask is None:
        mask = build_label_mask(corpus, config)
    docs, langs, words = [], [], []
    for d, doc in enumerate(corpus.documents):
        for l, toks in enumerate(doc.tokens):
            for t in toks:
                docs.append(d)
                langs.append(l)
                words.append(int(t))
    choices = [mask.permitted[d] for d in docs]
    size = int(np.prod([len(c) for c in choices], dtype=float))
    if size > MAX_ENUMERATION:
        raise ValueError(f"instance too large to enumerate: {size} assignment vectors (limit {MAX_ENUMERATION})")
    Z = np.array(list(itertools.product(*[c.tolist() for c in choices])), dtype=np.int64).reshape(size, len(docs))
    logp = collapsed_log_joint(Z, np.array(docs, np.int64), np.array(langs, np.int64), np.array(words, np.int64),
                               mask.permitted, corpus.vocab_sizes, config.alpha, config.beta, config.K)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    return {tuple(int(v) for v in row): float(q) for row, q in zip(Z, p)}


@dataclass
class TopicMatch:
    assignment: np.ndarray  # assignment[learned] = true topic
    distances: np.ndarray   # L1 distance per learned topic
    mean_l1: float


def match_topics(phi_learned: Sequence[np.ndarray], phi_true: Sequence[np.ndarray]) -> TopicMatch:
    """Greedy matching: repeatedly pair the closest remaining (learned, true) rows by L1 over all languages."""
    a = np.hstack([np.asarray(p, float) for p in phi_learned])
    b = np.hstack([np.asarray(p, float) for p in phi_true])
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    K = a.shape[0]
    dist = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
    assignment = np.full(K, -1, np.int64)
    distances = np.zeros(K)
    work = dist.copy()
    for _ in range(K):
        i, j = np.unravel_index(np.argmin(work), work.shape)
        assignment[i] = j
        distances[i] = dist[i, j]
        work[i, :] = np.inf
        work[:, j] = np.inf
    return TopicMatch(assignment, distances, float(distances.mean()))


def oracle_phi(corpus: Corpus, truth: GroundTruth, beta: Sequence[float], K: int) -> list[np.ndarray]:
    """Smoothed topic-term estimate from the true assignments: the best a sampler could hope for."""
    from .model import _layout, phi_from_counts, tally

    if truth.z_true is None:
        raise ValueError("ground truth lacks assignments")
    lay = _layout(corpus)
    gw = lay["words"] + lay["vocab_offsets"][lay["langs"]]
    _, n_kt, n_k, _ = tally(truth.z_true, lay["docs"], lay["langs"], gw, len(corpus), K, corpus.n_languages,
                            int(lay["vocab_offsets"][-1]))
    return phi_from_counts(n_kt, n_k, lay["vocab_offsets"], beta)

"""Polylingual labeled topic model: sampler state and collapsed Gibbs inference.

With ``use_labels=False`` every document may use every topic, and with a single
language the sampler is plain LDA; the four model variants differ only in
configuration.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .corpus import Corpus

logger = logging.getLogger(__name__)

EMPTY_LABEL_POLICIES = ("all-topics", "strict")


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    K: int
    L: int = 1
    alpha: float = 0.1
    beta: tuple[float, ...] = (0.01,)
    use_labels: bool = True
    sweeps: int = 500
    burn_in: int = 0
    seed: int = 0
    empty_labels: str = "all-topics"
    average_samples: bool = False

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        if len(beta) == 1 and self.L > 1:
            beta = beta * self.L
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.K < 1 or self.L < 1:
            raise ValueError("K and L must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if len(self.beta) != self.L or not all(b > 0 for b in self.beta):
            raise ValueError(f"beta needs {self.L} positive values, got {self.beta}")
        if self.sweeps < 1 or not 0 <= self.burn_in < self.sweeps:
            raise ValueError("require sweeps >= 1 and 0 <= burn_in < sweeps")
        if self.empty_labels not in EMPTY_LABEL_POLICIES:
            raise ValueError(f"empty_labels must be one of {EMPTY_LABEL_POLICIES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class LabelMask:
    """Permitted topics per document, stored CSR-style."""

    permitted: list[np.ndarray]

    def __post_init__(self):
        self.permitted = [np.asarray(p, dtype=np.int64) for p in self.permitted]
        sizes = np.array([len(p) for p in self.permitted], dtype=np.int64)
        self.ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.topics = (np.concatenate(self.permitted) if self.permitted else np.empty(0)).astype(np.int64)

    def __len__(self) -> int:
        return len(self.permitted)

    def indicator(self, d: int, K: int) -> np.ndarray:
        mu = np.zeros(K)
        mu[self.permitted[d]] = 1.0
        return mu

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return len(self) == len(other) and all(np.array_equal(a, b) for a, b in zip(self.permitted, other.permitted))


def build_label_mask(corpus: Corpus, config: ModelConfig) -> LabelMask:
    K = config.K
    everything = np.arange(K)
    permitted = []
    for doc in corpus.documents:
        if not config.use_labels:
            permitted.append(everything)
            continue
        if any(k >= K for k in doc.labels):
            raise LabelError(f"document {doc.doc_id!r} has label ids {doc.labels} but K={K}")
        if not doc.labels:
            if config.empty_labels == "strict":
                raise LabelError(f"document {doc.doc_id!r} has no labels (empty_labels='strict')")
            permitted.append(everything)
        else:
            permitted.append(np.array(doc.labels))
    return LabelMask(permitted)


@dataclass
class ModelState:
    """Topic assignments and count aggregates.

    Tokens are stored flat in sweep order (document, language, position);
    ``offsets[d * L + l]`` marks where document d, language l begins.
    Topic-term counts for all languages live side by side in ``n_kt_all``;
    language l occupies columns ``vocab_offsets[l]:vocab_offsets[l + 1]``.
    """

    z: np.ndarray
    docs: np.ndarray
    langs: np.ndarray
    words: np.ndarray
    offsets: np.ndarray
    vocab_offsets: np.ndarray
    n_dk: np.ndarray
    n_kt_all: np.ndarray
    n_k: np.ndarray
    n_d: np.ndarray

    @property
    def gwords(self) -> np.ndarray:
        return self.words + self.vocab_offsets[self.langs]

    @property
    def n_kt(self) -> list[np.ndarray]:
        vo = self.vocab_offsets
        return [self.n_kt_all[:, vo[l]:vo[l + 1]] for l in range(len(vo) - 1)]

    @property
    def n_languages(self) -> int:
        return len(self.vocab_offsets) - 1

    def assignments(self, d: int, l: int) -> np.ndarray:
        i = d * self.n_languages + l
        return self.z[self.offsets[i]:self.offsets[i + 1]]

    def token_index(self, d: int, l: int, position: int) -> int:
        i = d * self.n_languages + l
        start, stop = self.offsets[i], self.offsets[i + 1]
        if not 0 <= position < stop - start:
            raise IndexError(f"position {position} out of range for document {d}, language {l}")
        return int(start + position)

    def copy(self) -> "ModelState":
        return ModelState(**{k: v.copy() for k, v in self.__dict__.items()})


def _layout(corpus: Corpus) -> dict[str, np.ndarray]:
    L = corpus.n_languages
    docs, langs, words, lengths = [], [], [], []
    for d, doc in enumerate(corpus.documents):
        for l, toks in enumerate(doc.tokens):
            docs.append(np.full(len(toks), d, np.int64))
            langs.append(np.full(len(toks), l, np.int64))
            words.append(toks.astype(np.int64))
            lengths.append(len(toks))
    cat = lambda parts: np.concatenate(parts) if parts else np.empty(0, np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths, dtype=np.int64)]).astype(np.int64)
    vocab_offsets = np.concatenate([[0], np.cumsum(corpus.vocab_sizes, dtype=np.int64)]).astype(np.int64)
    assert len(offsets) == len(corpus) * L + 1
    return dict(docs=cat(docs), langs=cat(langs), words=cat(words), offsets=offsets, vocab_offsets=vocab_offsets)


def tally(z, docs, langs, gwords, D: int, K: int, L: int, total_vocab: int):
    """Recompute all counts from scratch."""
    n_dk = np.zeros((D, K), np.int64)
    np.add.at(n_dk, (docs, z), 1)
    n_kt = np.zeros((K, total_vocab), np.int64)
    np.add.at(n_kt, (z, gwords), 1)
    n_k = np.zeros((L, K), np.int64)
    np.add.at(n_k, (langs, z), 1)
    n_d = np.bincount(docs, minlength=D).astype(np.int64)
    return n_dk, n_kt, n_k, n_d


def state_from_assignments(corpus: Corpus, config: ModelConfig, z: np.ndarray) -> ModelState:
    lay = _layout(corpus)
    z = np.asarray(z, np.int64).copy()
    if z.shape != lay["docs"].shape:
        raise ValueError(f"expected {lay['docs'].shape[0]} assignments, got {z.shape}")
    gw = lay["words"] + lay["vocab_offsets"][lay["langs"]]
    counts = tally(z, lay["docs"], lay["langs"], gw, len(corpus), config.K, corpus.n_languages, int(lay["vocab_offsets"][-1]))
    return ModelState(z, **lay, n_dk=counts[0], n_kt_all=counts[1], n_k=counts[2], n_d=counts[3])


def recount(state: ModelState) -> tuple[np.ndarray, ...]:
    return tally(state.z, state.docs, state.langs, state.gwords, state.n_dk.shape[0], state.n_dk.shape[1],
                 state.n_languages, state.n_kt_all.shape[1])


def counts_consistent(state: ModelState) -> bool:
    n_dk, n_kt, n_k, n_d = recount(state)
    return (
        np.array_equal(n_dk, state.n_dk)
        and np.array_equal(n_kt, state.n_kt_all)
        and np.array_equal(n_k, state.n_k)
        and np.array_equal(n_d, state.n_d)
    )


def _check_compatible(corpus: Corpus, mask: LabelMask, config: ModelConfig) -> None:
    if corpus.n_languages != config.L:
        raise ValueError(f"corpus has {corpus.n_languages} languages, config.L={config.L}")
    if len(mask) != len(corpus):
        raise ValueError("label mask does not match corpus size")
    if any(len(p) == 0 for p in mask.permitted):
        raise LabelError("every document needs at least one permitted topic")


def init_state(corpus: Corpus, mask: LabelMask, config: ModelConfig, rng: np.random.Generator) -> ModelState:
    """Assign each token a topic uniformly from its document's permitted set."""
    _check_compatible(corpus, mask, config)
    lay = _layout(corpus)
    z = np.empty(lay["docs"].shape[0], np.int64)
    _kernels.init_assignments(lay["docs"], mask.ptr, mask.topics, rng.random(z.shape[0]), z)
    return state_from_assignments(corpus, config, z)


def _vbeta(state: ModelState, config: ModelConfig) -> np.ndarray:
    sizes = np.diff(state.vocab_offsets)
    return np.array([sizes[l] * config.beta[l] for l in range(config.L)])


def full_conditional(
    state: ModelState,
    mask: LabelMask,
    config: ModelConfig,
    d: int,
    l: int,
    t: int,
    current_k: int,
    include_doc_denominator: bool = False,
) -> np.ndarray:
    """Sampling distribution over all K topics for one token of word t, excluding itself from the counts.

    Non-permitted topics get exactly zero. The document-length denominator is
    the same for every topic and is only applied when asked for.
    """
    vo = state.vocab_offsets
    V = vo[l + 1] - vo[l]
    w = vo[l] + t
    n_dk = state.n_dk[d].astype(np.float64)
    n_kt = state.n_kt_all[:, w].astype(np.float64)
    n_k = state.n_k[l].astype(np.float64)
    n_dk[current_k] -= 1
    n_kt[current_k] -= 1
    n_k[current_k] -= 1
    allowed = mask.permitted[d]
    beta = config.beta[l]
    p = np.zeros(config.K)
    p[allowed] = (n_dk[allowed] + config.alpha) * (n_kt[allowed] + beta) / (n_k[allowed] + V * beta)
    if include_doc_denominator:
        p[allowed] /= state.n_d[d] - 1 + config.K * config.alpha
    total = p.sum()
    assert total > 0
    return p / total


def gibbs_sweep(
    state: ModelState,
    mask: LabelMask,
    config: ModelConfig,
    corpus: Corpus | None,
    rng: np.random.Generator,
) -> ModelState:
    """Resample every token once, in place. ``corpus`` is accepted for symmetry; the state carries the tokens."""
    if corpus is not None and state.docs.shape[0] != sum(d.length() for d in corpus.documents):
        raise ValueError("state does not belong to this corpus")
    u = rng.random(state.z.shape[0])
    cum = np.empty(config.K)
    _kernels.sweep(state.docs, state.langs, state.gwords, state.z, mask.ptr, mask.topics,
                   state.n_dk, state.n_kt_all, state.n_k, config.alpha, np.asarray(config.beta),
                   _vbeta(state, config), u, cum)
    return state


def phi_from_counts(n_kt_all: np.ndarray, n_k: np.ndarray, vocab_offsets: np.ndarray, beta: Sequence[float]) -> list[np.ndarray]:
    phi = []
    for l in range(len(vocab_offsets) - 1):
        counts = n_kt_all[:, vocab_offsets[l]:vocab_offsets[l + 1]].astype(np.float64)
        V = counts.shape[1]
        phi.append((counts + beta[l]) / (n_k[l][:, None] + V * beta[l]))
    return phi


def estimate_theta(state: ModelState, mask: LabelMask, config: ModelConfig, d: int) -> np.ndarray:
    """Posterior mean of theta_d under the label-restricted Dirichlet prior."""
    allowed = mask.permitted[d]
    theta = np.zeros(config.K)
    theta[allowed] = (state.n_dk[d, allowed] + config.alpha) / (state.n_d[d] + config.alpha * len(allowed))
    return theta


@dataclass
class SweepRecord:
    sweep: int
    seconds: float


@dataclass
class TrainedModel:
    phi: list[np.ndarray]
    config: ModelConfig
    label_mask: LabelMask
    final_state: ModelState | None = None
    history: list[SweepRecord] = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return self.config.K

    @property
    def vocab_sizes(self) -> list[int]:
        return [p.shape[1] for p in self.phi]

    def stacked_phi(self) -> np.ndarray:
        """phi for all languages side by side, shape (K, sum V)."""
        return np.ascontiguousarray(np.hstack(self.phi))


class Trainer:
    """Incremental training: owns one chain's state and advances it sweep by sweep."""

    def __init__(self, corpus: Corpus, config: ModelConfig):
        self.corpus = corpus
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.mask = build_label_mask(corpus, config)
        self.state = init_state(corpus, self.mask, config, self.rng)
        self.sweeps_done = 0
        self._phi_sum = None
        self._n_avg = 0
        self.history: list[SweepRecord] = []

    def step(self, n: int = 1) -> None:

        for _ in range(n):
            t0 = time.perf_counter()
            gibbs_sweep(self.state, self.mask, self.config, None, self.rng)
            self.sweeps_done += 1
            if self.config.average_samples and self.sweeps_done > self.config.burn_in:
                phi = self.current_phi()
                self._phi_sum = phi if self._phi_sum is None else [a + b for a, b in zip(self._phi_sum, phi)]
                self._n_avg += 1
            self.history.append(SweepRecord(self.sweeps_done, time.perf_counter() - t0))

    def current_phi(self) -> list[np.ndarray]:
        s = self.state
        return phi_from_counts(s.n_kt_all, s.n_k, s.vocab_offsets, self.config.beta)

    def model(self) -> TrainedModel:
        if self.config.average_samples and self._n_avg:
            phi = [p / self._n_avg for p in self._phi_sum]
        else:
            phi = self.current_phi()
        return TrainedModel(phi, self.config, self.mask, self.state.copy(), list(self.history))


def train(
    corpus: Corpus,
    config: ModelConfig,
    callback: Callable[[int, ModelState], None] | None = None,
) -> TrainedModel:
    """Run ``config.sweeps`` Gibbs sweeps from a fresh initialisation."""
    trainer = Trainer(corpus, config)
    log_every = max(1, config.sweeps // 10)
    for s in range(config.sweeps):
        trainer.step()
        if callback is not None:
            callback(trainer.sweeps_done, trainer.state)
        if trainer.sweeps_done % log_every == 0:
            logger.info("sweep %d/%d", trainer.sweeps_done, config.sweeps)
    return trainer.model()


def sample_chain(
    corpus: Corpus,
    config: ModelConfig,
    n_samples: int,
    burn_in: int,
    thin: int = 1,
) -> np.ndarray:
    """Collect thinned post-burn-in z vectors from one chain, shape (n_samples, N)."""
    rng = np.random.default_rng(config.seed)
    mask = build_label_mask(corpus, config)
    state = init_state(corpus, mask, config, rng)
    N = state.z.shape[0]
    out = np.empty((n_samples, N), np.int64)
    beta = np.asarray(config.beta)
    vbeta = _vbeta(state, config)
    gw = state.gwords
    args = (state.docs, state.langs, gw, state.z, mask.ptr, mask.topics, state.n_dk, state.n_kt_all,
            state.n_k, config.alpha, beta, vbeta)
    block = max(thin, (20000 // thin) * thin)
    done = 0
    while done < burn_in:
        size = min(block, burn_in - done)
        _kernels.run_chain(*args, rng.random((size, N)), size, 1, out[:0])
        done += size
    row = 0
    while row < n_samples:
        size = min(block, (n_samples - row) * thin)
        row += _kernels.run_chain(*args, rng.random((size, N)), 0, thin, out[row:])
    return out

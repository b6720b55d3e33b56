"""Held-out perplexity via fold-in, top terms, and word-intrusion tasks."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .corpus import Corpus, Document, HeldOutSplit, Vocabulary
from .model import ModelConfig, Trainer, TrainedModel

logger = logging.getLogger(__name__)

THREADS_ENV = "PLLTM_THREADS"


class EvaluationError(ValueError):
    pass


@dataclass
class PerplexityReport:
    per_iteration: list[tuple[int, float]]
    final: float
    token_count: int

    def write_csv(self, path) -> None:
        rows = self.per_iteration or [(-1, self.final)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "perplexity"])
            for sweep, ppx in rows:
                w.writerow([sweep, repr(float(ppx))])


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def permitted_topics(model: TrainedModel, doc: Document, use_labels: bool = True) -> np.ndarray:
    cfg = model.config
    if not (cfg.use_labels and use_labels) or not doc.labels:
        if cfg.use_labels and use_labels and cfg.empty_labels == "strict":
            raise EvaluationError(f"document {doc.doc_id!r} has no labels (empty_labels='strict')")
        return np.arange(cfg.K)
    labels = np.array(doc.labels, dtype=np.int64)
    if labels.max() >= cfg.K:
        raise EvaluationError(f"document {doc.doc_id!r} has label ids beyond K={cfg.K}")
    return labels


def _fold_in(phi_stacked, vocab_offsets, K, alpha, observed, permitted, fold_sweeps, burn_in, rng):
    if observed.length() == 0:
        raise EvaluationError(f"document {observed.doc_id!r} has no observed tokens")
    if len(permitted) == 1:
        theta = np.zeros(K)
        theta[permitted[0]] = 1.0
        return theta
    gwords = np.concatenate([toks.astype(np.int64) + vocab_offsets[l] for l, toks in enumerate(observed.tokens)])
    u = rng.random((fold_sweeps + 1, gwords.shape[0]))
    return _kernels.fold_in(gwords, permitted, phi_stacked, alpha, u, burn_in)


def fold_in(
    model: TrainedModel,
    observed: Document,
    fold_sweeps: int = 200,
    burn_in: int = 100,
    rng: np.random.Generator | None = None,
    use_labels: bool = True,
) -> np.ndarray:
    """Estimate theta for a held-out document by Gibbs sampling its tokens with phi fixed.

    Under a labeled model the document's labels restrict the topics unless
    ``use_labels`` is False. Theta is averaged over the sweeps after burn-in.
    """
    if not 0 <= burn_in < fold_sweeps:
        raise ValueError("need 0 <= burn_in < fold_sweeps")
    if observed.n_languages != model.config.L:
        raise EvaluationError(f"document has {observed.n_languages} languages, model has {model.config.L}")
    rng = rng if rng is not None else np.random.default_rng()
    vo = np.concatenate([[0], np.cumsum(model.vocab_sizes)]).astype(np.int64)
    return _fold_in(model.stacked_phi(), vo, model.K, model.config.alpha, observed,
                    permitted_topics(model, observed, use_labels), fold_sweeps, burn_in, rng)


def fold_in_all(
    model: TrainedModel,
    splits: Sequence[HeldOutSplit],
    fold_sweeps: int = 200,
    burn_in: int = 100,
    seed: int = 0,
    use_labels: bool = True,
    threads: int | None = None,
) -> list[np.ndarray]:
    """Fold in every split's observed part, each with its own spawned rng stream."""
    if not 0 <= burn_in < fold_sweeps:
        raise ValueError("need 0 <= burn_in < fold_sweeps")
    phi = model.stacked_phi()
    vo = np.concatenate([[0], np.cumsum(model.vocab_sizes)]).astype(np.int64)
    streams = np.random.SeedSequence(seed).spawn(len(splits))
    jobs = [(s.observed_part, permitted_topics(model, s.observed_part, use_labels), ss) for s, ss in zip(splits, streams)]

    def run(job):
        doc, perm, ss = job
        return _fold_in(phi, vo, model.K, model.config.alpha, doc, perm, fold_sweeps, burn_in, np.random.default_rng(ss))

    threads = threads or default_threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


def perplexity(model: TrainedModel, splits: Sequence[HeldOutSplit], thetas: Sequence[np.ndarray]) -> PerplexityReport:
    """exp of the negative mean natural-log probability of every scored token."""
    if len(splits) != len(thetas):
        raise ValueError("need one theta per split")
    log_lik = 0.0
    n = 0
    for split, theta in zip(splits, thetas):
        l = split.target_language
        toks = split.target_part.tokens[l]
        if len(toks) == 0:
            continue
        p = np.asarray(theta) @ model.phi[l][:, toks]
        assert np.all(p > 0), "zero predictive probability"
        log_lik += float(np.log(p).sum())
        n += len(toks)
    if n == 0:
        raise EvaluationError("no held-out tokens to score")
    return PerplexityReport([], math.exp(-log_lik / n), n)


def evaluate(
    model: TrainedModel,
    splits: Sequence[HeldOutSplit],
    fold_sweeps: int = 200,
    burn_in: int = 100,
    seed: int = 0,
    use_labels: bool = True,
    threads: int | None = None,
) -> PerplexityReport:
    thetas = fold_in_all(model, splits, fold_sweeps, burn_in, seed, use_labels, threads)
    return perplexity(model, splits, thetas)


def perplexity_curve(
    corpus_train: Corpus,
    splits: Sequence[HeldOutSplit],
    config: ModelConfig,
    eval_every: int,
    fold_sweeps: int = 200,
    fold_burn_in: int = 100,
    fold_seed: int = 0,
    use_labels: bool = True,
    threads: int | None = None,
) -> PerplexityReport:
    """Train for config.sweeps sweeps, scoring the held-out splits every ``eval_every`` sweeps."""
    if eval_every < 1:
        raise ValueError("eval_every must be >= 1")
    trainer = Trainer(corpus_train, config)
    points = []
    report = None
    while trainer.sweeps_done < config.sweeps:
        trainer.step(min(eval_every, config.sweeps - trainer.sweeps_done))
        if trainer.sweeps_done % eval_every and trainer.sweeps_done != config.sweeps:
            continue
        snapshot = trainer.model()
        report = evaluate(snapshot, splits, fold_sweeps, fold_burn_in, fold_seed, use_labels, threads)
        points.append((trainer.sweeps_done, report.final))
        logger.info("sweep %d: perplexity %.4f", trainer.sweeps_done, report.final)
    return PerplexityReport(points, report.final, report.token_count)


def top_terms(model: TrainedModel, topic: int, language: int, n: int,
              vocabulary: Vocabulary | None = None) -> list[tuple[str | int, float]]:
    """The n most probable terms of a topic, ties broken by lower term id."""
    row = model.phi[language][topic]
    if not 0 < n <= row.shape[0]:
        raise ValueError(f"n must be in [1, {row.shape[0]}]")
    order = np.argsort(-row, kind="stable")[:n]
    name = (lambda t: vocabulary.terms[t]) if vocabulary is not None else int
    return [(name(int(t)), float(row[t])) for t in order]


def write_top_terms(model: TrainedModel, vocabulary: Vocabulary, language: int, n: int, path,
                    topic_names: Sequence[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("topic\tname\t" + "\t".join(f"term{i + 1}" for i in range(n)) + "\n")
        for k in range(model.K):
            terms = [t for t, _ in top_terms(model, k, language, n, vocabulary)]
            name = topic_names[k] if topic_names is not None else f"topic{k}"
            fh.write(f"{k}\t{name}\t" + "\t".join(terms) + "\n")


@dataclass
class IntrusionTask:
    topic_id: int
    language_id: int
    terms: list[str]
    intruder_position: int
    intruder_home_topic: int
    term_ids: list[int] = field(default_factory=list, repr=False)

    @property
    def intruder(self) -> str:
        return self.terms[self.intruder_position]


def generate_intrusion_task(
    model: TrainedModel,
    topic: int,
    language: int,
    rng: np.random.Generator,
    vocabulary: Vocabulary | None = None,
    n_top: int = 5,
    exclude_top: int = 30,
    home_top: int = 10,
) -> IntrusionTask:
    """Top ``n_top`` terms of a topic plus one intruder, shuffled.

    The intruder is drawn uniformly from terms that are in some other topic's
    top ``home_top`` but not in this topic's top ``exclude_top``.
    """
    phi = model.phi[language]
    K, V = phi.shape
    if K < 2:
        raise EvaluationError("word intrusion needs at least two topics")
    if V < exclude_top + 1:
        raise EvaluationError(f"vocabulary of {V} terms is too small for top-{exclude_top} exclusion")
    ranked = lambda k, n: np.argsort(-phi[k], kind="stable")[:n]
    top = ranked(topic, n_top)
    excluded = set(ranked(topic, exclude_top).tolist())
    candidates = sorted({int(t) for k in range(K) if k != topic for t in ranked(k, home_top)} - excluded)
    if not candidates:
        raise EvaluationError(
            f"no intruder candidates for topic {topic}: every other topic's top-{home_top} lies in its top-{exclude_top}; "
            "relax exclude_top or home_top"
        )
    intruder = candidates[int(rng.integers(len(candidates)))]
    others = [k for k in range(K) if k != topic and intruder in set(ranked(k, home_top).tolist())]
    home = max(others, key=lambda k: (phi[k, intruder], -k))
    ids = [int(t) for t in top] + [intruder]
    perm = rng.permutation(len(ids))
    ids = [ids[i] for i in perm]
    position = int(np.flatnonzero(perm == len(perm) - 1)[0])
    name = (lambda t: vocabulary.terms[t]) if vocabulary is not None else str
    return IntrusionTask(topic, language, [name(t) for t in ids], position, int(home), ids)


def write_intrusion_tasks(tasks: Sequence[IntrusionTask], path, key_path) -> None:
    """Tasks without answers to ``path``; positions, intruders and home topics to ``key_path``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("topic\tlanguage\t" + "\t".join(f"term{i + 1}" for i in range(6)) + "\n")
        for t in tasks:
            fh.write(f"{t.topic_id}\t{t.language_id}\t" + "\t".join(t.terms) + "\n")
    with open(key_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("topic\tlanguage\tintruder_position\tintruder\thome_topic\n")
        for t in tasks:
            fh.write(f"{t.topic_id}\t{t.language_id}\t{t.intruder_position}\t{t.intruder}\t{t.intruder_home_topic}\n")

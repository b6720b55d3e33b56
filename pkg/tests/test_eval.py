import csv
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from plltm.corpus import Document, HeldOutSplit, Vocabulary, split_documents
from plltm.eval import (
    EvaluationError,
    PerplexityReport,
    evaluate,
    fold_in,
    fold_in_all,
    generate_intrusion_task,
    perplexity,
    perplexity_curve,
    top_terms,
    write_intrusion_tasks,
    write_top_terms,
)
from plltm.model import LabelMask, ModelConfig, TrainedModel, train


def fixed_model(phi, alpha=0.1, use_labels=True):
    phi = [np.asarray(p, float) for p in phi]
    cfg = ModelConfig(K=phi[0].shape[0], L=len(phi), alpha=alpha, beta=0.01, use_labels=use_labels)
    return TrainedModel(phi, cfg, LabelMask([]))


def split(target_tokens, L=1, l=0, labels=()):
    blocks = [[] for _ in range(L)]
    blocks[l] = target_tokens
    doc = Document("t", blocks, labels)
    return HeldOutSplit(Document("t", [[0]] * L, labels), doc, l)


def exact_fold_in_mean(phi, words, alpha):
    """Posterior mean of theta for fixed phi by enumerating every assignment."""
    K = phi.shape[0]
    n = len(words)
    weights, thetas = [], []
    for z in product(range(K), repeat=n):
        counts = np.bincount(z, minlength=K)
        logw = (gammaln(counts + alpha) - gammaln(alpha)).sum() + sum(np.log(phi[k, w]) for k, w in zip(z, words))
        weights.append(logw)
        thetas.append((counts + alpha) / (n + K * alpha))
    w = np.exp(np.array(weights) - max(weights))
    return (w[:, None] * np.array(thetas)).sum(0) / w.sum()


class TestFoldIn:
    def test_single_topic(self):
        m = fixed_model([[[0.5, 0.5]]])
        assert fold_in(m, Document("x", [[0, 1, 1]]), rng=np.random.default_rng(0)).tolist() == [1.0]

    def test_label_restriction(self):
        m = fixed_model([np.full((4, 3), 1 / 3)])
        th = fold_in(m, Document("x", [[0, 1, 2]], labels=(2,)), rng=np.random.default_rng(0))
        assert th.tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_labels_ignored_when_asked(self):
        m = fixed_model([np.full((4, 3), 1 / 3)])
        th = fold_in(m, Document("x", [[0, 1, 2]], labels=(2,)), rng=np.random.default_rng(0), use_labels=False)
        assert (th > 0).all()

    def test_matches_enumeration(self):
        phi = np.array([[0.9, 0.1], [0.2, 0.8]])
        words = [0, 0, 1, 1, 0]
        exact = exact_fold_in_mean(phi, words, 0.1)
        est = fold_in(fixed_model([phi]), Document("x", [words]), fold_sweeps=4000, burn_in=100,
                      rng=np.random.default_rng(5))
        assert 0.5 * np.abs(est - exact).sum() < 0.05

    def test_polylingual_uses_all_languages(self):
        phi0 = np.array([[0.99, 0.01], [0.01, 0.99]])
        phi1 = np.array([[0.5, 0.5], [0.5, 0.5]])
        m = fixed_model([phi0, phi1])
        th = fold_in(m, Document("x", [[0, 0, 0, 0], [1]]), fold_sweeps=500, burn_in=50, rng=np.random.default_rng(1))
        assert th[0] > 0.8

    def test_empty_document(self):
        with pytest.raises(EvaluationError):
            fold_in(fixed_model([[[0.5, 0.5], [0.5, 0.5]]]), Document("x", [[]]), rng=np.random.default_rng(0))

    @settings(max_examples=25, deadline=None)
    @given(st.sets(st.integers(0, 4), min_size=1, max_size=4), st.lists(st.integers(0, 5), min_size=1, max_size=8),
           st.integers(0, 1000))
    def test_label_closure(self, labels, words, seed):
        rng = np.random.default_rng(seed)
        m = fixed_model([rng.dirichlet(np.ones(6), size=5)])
        th = fold_in(m, Document("x", [words], tuple(labels)), fold_sweeps=20, burn_in=5, rng=rng)
        off = np.setdiff1d(np.arange(5), sorted(labels))
        assert np.all(th[off] == 0) and abs(th.sum() - 1) < 1e-9

    def test_parallel_matches_serial(self, small_synth):
        corpus, _ = small_synth
        m = train(corpus, ModelConfig(K=5, L=2, sweeps=5))
        splits = split_documents(corpus.documents[:12], 1, 0.5, seed=3)
        a = fold_in_all(m, splits, 30, 10, seed=4, threads=1)
        b = fold_in_all(m, splits, 30, 10, seed=4, threads=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestPerplexity:
    def test_uniform_model(self):
        m = fixed_model([np.full((1, 4), 0.25)])
        r = perplexity(m, [split([0, 3, 3, 1, 2])], [np.array([1.0])])
        assert r.final == pytest.approx(4.0, abs=1e-9)
        assert r.token_count == 5

    def test_perfect_prediction(self):
        m = fixed_model([np.array([[1.0, 0.0], [0.0, 1.0]])])
        assert perplexity(m, [split([1, 1, 1])], [np.array([0.0, 1.0])]).final == pytest.approx(1.0, abs=1e-12)

    def test_three_tokens_closed_form(self):
        # probabilities 0.5, 0.25, 0.125: geometric mean 1/4, so perplexity 4
        m = fixed_model([np.array([[0.5, 0.25, 0.125, 0.125]])])
        r = perplexity(m, [split([0, 1, 2])], [np.array([1.0])])
        expected = math.exp(-(math.log(0.5) + math.log(0.25) + math.log(0.125)) / 3)
        assert r.final == pytest.approx(expected, abs=1e-12)
        assert r.final == pytest.approx(4.0, abs=1e-12)

    def test_scores_target_language_only(self):
        m = fixed_model([np.full((1, 2), 0.5), np.full((1, 8), 0.125)])
        r = perplexity(m, [split([0, 7, 3], L=2, l=1)], [np.array([1.0])])
        assert r.final == pytest.approx(8.0, abs=1e-9)

    @given(st.lists(st.lists(st.integers(0, 5), min_size=1, max_size=6), min_size=1, max_size=5),
           st.integers(0, 100), st.randoms())
    def test_permutation_invariance(self, docs, seed, rnd):
        rng = np.random.default_rng(seed)
        m = fixed_model([rng.dirichlet(np.ones(6), size=3)])
        thetas = [rng.dirichlet(np.ones(3)) for _ in docs]
        splits = [split(d) for d in docs]
        base = perplexity(m, splits, thetas).final
        order = list(range(len(docs)))
        rnd.shuffle(order)
        shuffled = [split(sorted(docs[i], key=lambda _: rnd.random())) for i in order]
        assert perplexity(m, shuffled, [thetas[i] for i in order]).final == pytest.approx(base, rel=1e-12)

    @given(st.integers(1, 50), st.lists(st.integers(0, 49), min_size=1, max_size=20))
    def test_uniform_property(self, V, toks):
        toks = [t % V for t in toks]
        m = fixed_model([np.full((1, V), 1.0 / V)])
        assert perplexity(m, [split(toks)], [np.array([1.0])]).final == pytest.approx(V, abs=1e-9)

    def test_csv(self, tmp_path):
        PerplexityReport([(10, 5.5), (20, 4.25)], 4.25, 7).write_csv(tmp_path / "p.csv")
        rows = list(csv.reader(open(tmp_path / "p.csv")))
        assert rows == [["sweep", "perplexity"], ["10", "5.5"], ["20", "4.25"]]


class TestCurve:
    def test_degenerate_schedule_equals_direct(self, small_synth):
        corpus, _ = small_synth
        train_c, test_docs = corpus.subset(range(45)), corpus.documents[45:]
        splits = split_documents(test_docs, 1, 0.5, seed=2)
        cfg = ModelConfig(K=5, L=2, sweeps=8, seed=4)
        curve = perplexity_curve(train_c, splits, cfg, eval_every=8, fold_sweeps=30, fold_burn_in=10, fold_seed=6)
        direct = evaluate(train(train_c, cfg), splits, 30, 10, seed=6)
        assert curve.per_iteration == [(8, direct.final)]
        assert curve.final == direct.final

    def test_schedule(self, small_synth):
        corpus, _ = small_synth
        splits = split_documents(corpus.documents[50:], 1, 0.5, seed=2)
        r = perplexity_curve(corpus.subset(range(50)), splits, ModelConfig(K=5, L=2, sweeps=10), 3, 20, 5)
        assert [s for s, _ in r.per_iteration] == [3, 6, 9, 10]


class TestTopTerms:
    def test_sort(self):
        m = fixed_model([np.array([[0.5, 0.3, 0.2]])])
        assert top_terms(m, 0, 0, 2, Vocabulary(0, ["a", "b", "c"])) == [("a", 0.5), ("b", 0.3)]

    def test_complete(self, small_synth):
        corpus, _ = small_synth
        m = train(corpus, ModelConfig(K=5, L=2, sweeps=3))
        terms = top_terms(m, 2, 1, corpus.vocab_sizes[1])
        assert sorted(t for t, _ in terms) == list(range(corpus.vocab_sizes[1]))
        assert sum(p for _, p in terms) == pytest.approx(1.0, abs=1e-9)
        probs = [p for _, p in terms]
        assert all(a >= b for a, b in zip(probs, probs[1:]))

    def test_ties_by_id(self):
        m = fixed_model([np.array([[0.1, 0.3, 0.3, 0.3]])])
        for _ in range(3):
            assert [t for t, _ in top_terms(m, 0, 0, 3)] == [1, 2, 3]

    def test_write(self, tmp_path):
        m = fixed_model([np.array([[0.6, 0.4], [0.1, 0.9]])])
        write_top_terms(m, Vocabulary(0, ["x", "y"]), 0, 2, tmp_path / "t.tsv", ["A", "B"])
        assert (tmp_path / "t.tsv").read_text() == "topic\tname\tterm1\tterm2\n0\tA\tx\ty\n1\tB\ty\tx\n"


def disjoint_model(V=80):
    ramp = np.arange(V) / V
    # sloped backgrounds keep each topic's ranks 11..30 away from the other's top-10
    phi = np.vstack([1e-4 * (1 - ramp / 2), 1e-4 * (1 + ramp)])
    phi[0, :10] = np.linspace(0.2, 0.05, 10)
    phi[1, 40:50] = np.linspace(0.2, 0.05, 10)
    return fixed_model([phi / phi.sum(1, keepdims=True)])


class TestIntrusion:
    def test_disjoint_support(self):
        m = disjoint_model()
        for seed in range(20):
            t = generate_intrusion_task(m, 0, 0, np.random.default_rng(seed))
            intruder = t.term_ids[t.intruder_position]
            assert 40 <= intruder < 50 and t.intruder_home_topic == 1
            others = sorted(x for i, x in enumerate(t.term_ids) if i != t.intruder_position)
            assert others == [0, 1, 2, 3, 4]
            assert len(t.terms) == 6

    def test_identical_topics(self):
        m = fixed_model([np.tile(np.linspace(1, 2, 40) / np.linspace(1, 2, 40).sum(), (2, 1))])
        with pytest.raises(EvaluationError, match="relax"):
            generate_intrusion_task(m, 0, 0, np.random.default_rng(0))

    def test_deterministic(self):
        m = disjoint_model()
        a = generate_intrusion_task(m, 1, 0, np.random.default_rng(3))
        b = generate_intrusion_task(m, 1, 0, np.random.default_rng(3))
        assert a == b

    def test_preconditions(self):
        with pytest.raises(EvaluationError):
            generate_intrusion_task(fixed_model([np.full((1, 40), 1 / 40)]), 0, 0, np.random.default_rng(0))
        with pytest.raises(EvaluationError):
            generate_intrusion_task(fixed_model([np.full((2, 20), 1 / 20)]), 0, 0, np.random.default_rng(0))

    def test_position_varies(self):
        m = disjoint_model()
        positions = {generate_intrusion_task(m, 0, 0, np.random.default_rng(s)).intruder_position for s in range(60)}
        assert positions == set(range(6))

    def test_export(self, tmp_path):
        m = disjoint_model()
        vocab = Vocabulary(0, [f"w{i}" for i in range(80)])
        t = generate_intrusion_task(m, 0, 0, np.random.default_rng(1), vocab)
        write_intrusion_tasks([t], tmp_path / "tasks.tsv", tmp_path / "key.tsv")
        task_line = (tmp_path / "tasks.tsv").read_text().splitlines()[1].split("\t")
        key_line = (tmp_path / "key.tsv").read_text().splitlines()[1].split("\t")
        assert task_line[:2] == ["0", "0"] and task_line[2:] == t.terms
        assert key_line == ["0", "0", str(t.intruder_position), t.intruder, "1"]

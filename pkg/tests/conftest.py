import numpy as np
import pytest

from plltm.corpus import Corpus, Document, Vocabulary
from plltm.synth import generate_corpus


def make_corpus(docs, vocab_sizes, n_labels=2):
    """docs: list of (per-language token lists, labels)."""
    vocabs = [Vocabulary(l, [f"l{l}t{t}" for t in range(v)]) for l, v in enumerate(vocab_sizes)]
    return Corpus([Document(f"d{i}", toks, labels) for i, (toks, labels) in enumerate(docs)], vocabs,
                  [f"label{k}" for k in range(n_labels)])


@pytest.fixture
def tiny_corpus():
    # the two-document instance used by the exactness checks
    return make_corpus([([[0, 0, 1]], ()), ([[1, 1]], ())], [2])


@pytest.fixture(scope="session")
def small_synth():
    return generate_corpus(K=5, L=2, vocab_sizes=[40, 30], D=60, labels_per_doc_mean=2.0,
                           doc_length_means=[20.0, 10.0], alpha=0.1, beta=0.01, rng=np.random.default_rng(7))


# --- acceptance reporting: one PASS/FAIL line per criterion ------------------

_criteria: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker or _criteria.get(marker) == "FAIL":
        return
    if report.when == "call":
        _criteria[marker] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and not report.passed:
        _criteria[marker] = "FAIL"


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m:
        item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        terminalreporter.write_line(f"[{_criteria[name]}] {name}")

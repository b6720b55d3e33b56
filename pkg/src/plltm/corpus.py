"""Multilingual labeled corpora: vocabularies, encoding, file I/O and held-out splits."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TOKEN_DTYPE = np.int32


class CorpusError(ValueError):
    """Raised on malformed corpus input or inconsistent corpus data."""


@dataclass
class Vocabulary:
    language_id: int
    terms: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.terms = list(self.terms)
        self.index = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise CorpusError(f"duplicate terms in vocabulary of language {self.language_id}")

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.language_id == other.language_id and self.terms == other.terms


@dataclass(eq=False)
class Document:
    """A document as per-language token-id arrays plus a sorted tuple of label ids.

    A language block may be empty.
    """

    doc_id: str
    tokens: list[np.ndarray]
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        self.tokens = [np.asarray(t, dtype=TOKEN_DTYPE).reshape(-1) for t in self.tokens]
        self.labels = tuple(sorted(set(int(k) for k in self.labels)))

    @property
    def n_languages(self) -> int:
        return len(self.tokens)

    def length(self, language: int | None = None) -> int:
        if language is None:
            return sum(len(t) for t in self.tokens)
        return len(self.tokens[language])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Document):
            return NotImplemented
        return (
            self.doc_id == other.doc_id
            and self.labels == other.labels
            and len(self.tokens) == len(other.tokens)
            and all(np.array_equal(a, b) for a, b in zip(self.tokens, other.tokens))
        )


@dataclass(eq=False)
class Corpus:
    documents: list[Document]
    vocabularies: list[Vocabulary]
    label_names: list[str]

    def __post_init__(self):
        self.validate()

    @property
    def n_languages(self) -> int:
        return len(self.vocabularies)

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    @property
    def vocab_sizes(self) -> list[int]:
        return [len(v) for v in self.vocabularies]

    def __len__(self) -> int:
        return len(self.documents)

    def token_count(self, language: int) -> int:
        return sum(d.length(language) for d in self.documents)

    def validate(self) -> None:
        L, K = self.n_languages, self.n_labels
        sizes = self.vocab_sizes
        for l, v in enumerate(self.vocabularies):
            if v.language_id != l:
                raise CorpusError(f"vocabulary {l} carries language_id {v.language_id}")
        for doc in self.documents:
            if doc.n_languages != L:
                raise CorpusError(f"document {doc.doc_id!r} has {doc.n_languages} language blocks, corpus has {L}")
            for l, toks in enumerate(doc.tokens):
                if len(toks) == 0:
                    continue
                if sizes[l] == 0:
                    raise CorpusError(f"language {l} is used by document {doc.doc_id!r} but has an empty vocabulary")
                if toks.min() < 0 or toks.max() >= sizes[l]:
                    raise CorpusError(f"document {doc.doc_id!r}: token id out of range for language {l} (V={sizes[l]})")
            for k in doc.labels:
                if not 0 <= k < K:
                    raise CorpusError(f"document {doc.doc_id!r}: label id {k} out of range (K={K})")

    def select_languages(self, languages: Sequence[int]) -> "Corpus":
        """Project onto a subset of languages, re-indexed in the given order."""
        languages = list(languages)
        vocabs = [Vocabulary(i, self.vocabularies[l].terms) for i, l in enumerate(languages)]
        docs = [Document(d.doc_id, [d.tokens[l] for l in languages], d.labels) for d in self.documents]
        return Corpus(docs, vocabs, list(self.label_names))

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus([self.documents[i] for i in indices], self.vocabularies, list(self.label_names))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.vocabularies == other.vocabularies
            and self.label_names == other.label_names
            and self.documents == other.documents
        )


@dataclass
class RawDocument:
    doc_id: str
    labels: list[str]
    tokens: list[list[str]]


@dataclass
class HeldOutSplit:
    observed_part: Document
    target_part: Document
    target_language: int


def build_vocabulary(
    raw_docs: Sequence[RawDocument | Sequence[Sequence[str]]],
    language: int,
    min_count: int = 5,
    stopwords: Iterable[str] = (),
) -> Vocabulary:
    """Keep terms with frequency >= min_count that are not stopwords.

    Terms are ordered by descending frequency, then lexicographically. Each raw
    document is either a RawDocument or a per-language list of token lists.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    stop = set(stopwords)
    counts: Counter[str] = Counter()
    for doc in raw_docs:
        blocks = doc.tokens if isinstance(doc, RawDocument) else doc
        if language < len(blocks):
            counts.update(blocks[language])
    kept = [(t, c) for t, c in counts.items() if c >= min_count and t not in stop]
    if not kept:
        raise CorpusError(
            f"vocabulary for language {language} is empty after filtering "
            f"(min_count={min_count}, {len(stop)} stopwords); relax the filters"
        )
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocabulary(language, [t for t, _ in kept])


def encode_corpus(
    raw_docs: Sequence[RawDocument],
    vocabularies: Sequence[Vocabulary],
    label_names: Sequence[str],
) -> tuple[Corpus, int]:
    """Map raw documents to ids. Returns the corpus and the number of dropped documents.

    Out-of-vocabulary tokens are dropped; documents left with no tokens in any
    language are dropped.
    """
    label_index = {name: i for i, name in enumerate(label_names)}
    L = len(vocabularies)
    docs = []
    dropped = 0
    for raw in raw_docs:
        if len(raw.tokens) > L:
            raise CorpusError(f"document {raw.doc_id!r} has {len(raw.tokens)} languages, expected at most {L}")
        labels = []
        for name in raw.labels:
            if name not in label_index:
                raise CorpusError(f"document {raw.doc_id!r}: unknown label {name!r}")
            labels.append(label_index[name])
        blocks = list(raw.tokens) + [[] for _ in range(L - len(raw.tokens))]
        tokens = []
        for vocab, block in zip(vocabularies, blocks):
            idx = vocab.index
            tokens.append([idx[t] for t in block if t in idx])
        if not any(tokens):
            dropped += 1
            continue
        docs.append(Document(raw.doc_id, tokens, labels))
    if dropped:
        logger.info("dropped %d documents with no in-vocabulary tokens", dropped)
    return Corpus(docs, list(vocabularies), list(label_names)), dropped


def split_held_out(doc: Document, target_language: int, fraction: float, rng: np.random.Generator) -> HeldOutSplit:
    """Randomly move ceil(fraction * N) target-language tokens to the observed part.

    All other languages go to the observed part. The observed share is capped at
    N - 1 so the scored part is never empty.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    toks = doc.tokens[target_language]
    n = len(toks)
    if n < 2:
        raise CorpusError(
            f"document {doc.doc_id!r} has {n} tokens in language {target_language}; need >= 2 for held-out evaluation"
        )
    n_obs = min(math.ceil(fraction * n), n - 1)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.permutation(n)[:n_obs]] = True
    observed = [t if l != target_language else toks[chosen] for l, t in enumerate(doc.tokens)]
    target = [np.empty(0, TOKEN_DTYPE) if l != target_language else toks[~chosen] for l in range(doc.n_languages)]
    return HeldOutSplit(
        Document(doc.doc_id, observed, doc.labels),
        Document(doc.doc_id, target, doc.labels),
        target_language,
    )


def split_documents(
    documents: Sequence[Document],
    target_language: int,
    fraction: float,
    seed: int,
) -> list[HeldOutSplit]:
    """Split every usable document; those with < 2 target tokens are skipped."""
    seeds = np.random.SeedSequence(seed).spawn(len(documents))
    out = []
    for doc, ss in zip(documents, seeds):
        if doc.length(target_language) < 2:
            logger.debug("skipping %s: too few target-language tokens", doc.doc_id)
            continue
        out.append(split_held_out(doc, target_language, fraction, np.random.default_rng(ss)))
    return out


# --- text format -------------------------------------------------------------
#
# One document per line:
#   doc_id <TAB> label,label,... <TAB> lang0: tok tok ... <TAB> lang1: tok ...
# Sidecars next to an encoded corpus file:
#   <path>.labels     one label name per line (line number = label id)
#   <path>.vocab<l>   one term per line (line number = term id), l = 0..L-1


def _parse_line(line: str, lineno: int, path) -> RawDocument:
    fields = line.rstrip("\n").split("\t")
    if len(fields) < 2 or not fields[0]:
        raise CorpusError(f"{path}:{lineno}: expected 'doc_id<TAB>labels<TAB>langN: tokens...'")
    doc_id, label_field = fields[0], fields[1]
    labels = [s.strip() for s in label_field.split(",") if s.strip()]
    blocks: dict[int, list[str]] = {}
    for f in fields[2:]:
        tag, sep, rest = f.partition(":")
        tag = tag.strip()
        if not sep or not tag.startswith("lang") or not tag[4:].isdigit():
            raise CorpusError(f"{path}:{lineno}: malformed language block {f[:30]!r}")
        l = int(tag[4:])
        if l in blocks:
            raise CorpusError(f"{path}:{lineno}: language {l} given twice")
        blocks[l] = rest.split()
    L = max(blocks) + 1 if blocks else 0
    return RawDocument(doc_id, labels, [blocks.get(l, []) for l in range(L)])


def read_raw_documents(path) -> list[RawDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            docs.append(_parse_line(line, lineno, path))
    if not docs:
        raise CorpusError(f"{path}: no documents")
    return docs


def write_raw_documents(docs: Iterable[RawDocument], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            blocks = "\t".join(f"lang{l}: " + " ".join(toks) for l, toks in enumerate(doc.tokens))
            fh.write(f"{doc.doc_id}\t{','.join(doc.labels)}\t{blocks}\n")


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _sidecar(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.name + suffix)


def save_corpus(corpus: Corpus, path) -> None:
    for name in corpus.label_names:
        if "," in name or "\t" in name or "\n" in name:
            raise CorpusError(f"label name {name!r} contains a reserved character")
    _sidecar(path, ".labels").write_text("".join(n + "\n" for n in corpus.label_names), encoding="utf-8")
    for l, vocab in enumerate(corpus.vocabularies):
        _sidecar(path, f".vocab{l}").write_text("".join(t + "\n" for t in vocab.terms), encoding="utf-8")
    raw = (
        RawDocument(
            d.doc_id,
            [corpus.label_names[k] for k in d.labels],
            [[corpus.vocabularies[l].terms[t] for t in toks] for l, toks in enumerate(d.tokens)],
        )
        for d in corpus.documents
    )
    write_raw_documents(raw, path)


def load_sidecars(path) -> tuple[list[Vocabulary], list[str]]:
    """Vocabularies and label names stored next to an encoded corpus file."""
    labels_path = _sidecar(path, ".labels")
    if not labels_path.exists():
        raise CorpusError(f"missing label sidecar {labels_path}")
    label_names = _read_lines(labels_path)
    vocabs = []
    while _sidecar(path, f".vocab{len(vocabs)}").exists():
        vocabs.append(Vocabulary(len(vocabs), _read_lines(_sidecar(path, f".vocab{len(vocabs)}"))))
    if not vocabs:
        raise CorpusError(f"no vocabulary sidecars found for {path}")
    return vocabs, label_names


def load_corpus(path) -> Corpus:
    """Load an encoded corpus. Every term must be in its language's sidecar vocabulary."""
    vocabs, label_names = load_sidecars(path)
    label_index = {n: i for i, n in enumerate(label_names)}
    L = len(vocabs)
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            raw = _parse_line(line, lineno, path)
            if len(raw.tokens) > L:
                raise CorpusError(f"{path}:{lineno}: document {raw.doc_id!r} uses language {len(raw.tokens) - 1}, corpus has {L}")
            labels = []
            for name in raw.labels:
                if name not in label_index:
                    raise CorpusError(
                        f"{path}:{lineno}: document {raw.doc_id!r} has label {name!r} outside the {len(label_names)} known labels"
                    )
                labels.append(label_index[name])
            tokens = []
            for l in range(L):
                block = raw.tokens[l] if l < len(raw.tokens) else []
                idx = vocabs[l].index
                try:
                    tokens.append([idx[t] for t in block])
                except KeyError as exc:
                    raise CorpusError(
                        f"{path}:{lineno}: document {raw.doc_id!r} has term {exc.args[0]!r} not in vocabulary {l}"
                    ) from None
            docs.append(Document(raw.doc_id, tokens, labels))
    if not docs:
        raise CorpusError(f"{path}: no documents")
    return Corpus(docs, vocabs, label_names)


def read_stopwords(path) -> set[str]:
    return {line.strip() for line in _read_lines(path) if line.strip() and not line.startswith("#")}


def prepare_corpus(
    raw_docs: Sequence[RawDocument],
    min_count: int = 5,
    stopwords: Iterable[str] = (),
    label_names: Sequence[str] | None = None,
) -> tuple[Corpus, int]:
    """Build vocabularies for every language present and encode."""
    L = max(len(d.tokens) for d in raw_docs)
    stop = set(stopwords)
    vocabs = [build_vocabulary(raw_docs, l, min_count, stop) for l in range(L)]
    if label_names is None:
        label_names = sorted({name for d in raw_docs for name in d.labels})
    return encode_corpus(raw_docs, vocabs, label_names)

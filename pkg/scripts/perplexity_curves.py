"""Held-out perplexity against training sweeps for the four model variants.

Samples a two-language labeled corpus, holds out test documents, and writes one
CSV per variant (columns: model, sweep, perplexity) into the output directory.
Lower curves are better; the labeled polylingual model should sit lowest.

    python scripts/perplexity_curves.py --out runs/curves --sweeps 200 --every 10
"""
import argparse
import csv
import logging
from pathlib import Path

import numpy as np

from plltm.corpus import split_documents
from plltm.eval import perplexity_curve
from plltm.model import ModelConfig
from plltm.synth import generate_corpus

VARIANTS = {
    # name: (languages kept, use_labels)
    "lda": ([1], False),
    "llda": ([1], True),
    "pltm": ([0, 1], False),
    "plltm": ([0, 1], True),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/curves"))
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--every", type=int, default=10)
    p.add_argument("--docs", type=int, default=500)
    p.add_argument("--test-docs", type=int, default=100)
    p.add_argument("--seed", type=int, default=404)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    K = 10
    corpus, _ = generate_corpus(K=K, L=2, vocab_sizes=[200, 200], D=args.docs + args.test_docs,
                                labels_per_doc_mean=2.0, doc_length_means=[60.0, 60.0], alpha=0.1,
                                beta=[0.01, 0.01], rng=np.random.default_rng(args.seed))
    train_corpus = corpus.subset(range(args.docs))
    test_corpus = corpus.subset(range(args.docs, len(corpus)))
    args.out.mkdir(parents=True, exist_ok=True)

    for name, (langs, labeled) in VARIANTS.items():
        train = train_corpus.select_languages(langs)
        test = test_corpus.select_languages(langs)
        target = langs.index(1)
        splits = split_documents(test.documents, target, 0.5, args.seed)
        config = ModelConfig(K=K, L=len(langs), alpha=0.1, beta=(0.01,), use_labels=labeled,
                             sweeps=args.sweeps, seed=args.seed)
        report = perplexity_curve(train, splits, config, args.every, use_labels=labeled, threads=args.threads)
        with open(args.out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "sweep", "perplexity"])
            for sweep, ppx in report.per_iteration:
                w.writerow([name, sweep, f"{ppx:.6f}"])
        print(f"{name:6s} final perplexity {report.final:.4f}")


if __name__ == "__main__":
    main()

"""Command-line entry point.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .binfmt import FormatError
from .corpus import (
    CorpusError,
    encode_corpus,
    load_corpus,
    load_sidecars,
    prepare_corpus,
    read_raw_documents,
    read_stopwords,
    save_corpus,
    split_documents,
)
from .eval import (
    EvaluationError,
    evaluate,
    generate_intrusion_task,
    perplexity_curve,
    write_intrusion_tasks,
    write_top_terms,
)
from .model import LabelError, ModelConfig, train
from .persist import load_model, read_model_header, save_model
from .synth import generate_corpus, save_ground_truth

logger = logging.getLogger("plltm")

MODELS = ("lda", "llda", "pltm", "plltm")
DATA_ERRORS = (CorpusError, FormatError, LabelError, EvaluationError, OSError, ValueError)


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _unit_open(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {value}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def write_manifest(output, command: str, argv: list[str], seed: int, timings: dict, config=None, corpora=()) -> Path:
    path = Path(str(output) + ".manifest.json")
    manifest = {
        "command": command,
        "argv": argv,
        "seed": seed,
        "version": __version__,
        "config": asdict(config) if config is not None else None,
        "corpora": [str(c) for c in corpora],
        "timings_seconds": timings,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# --- commands ----------------------------------------------------------------


def cmd_prepare(args, argv) -> int:
    t0 = time.perf_counter()
    raw = read_raw_documents(args.raw)
    stop = read_stopwords(args.stopwords) if args.stopwords else set()
    if args.vocab_from:
        vocabs, labels = load_sidecars(args.vocab_from)
        corpus, dropped = encode_corpus(raw, vocabs, labels)
    else:
        corpus, dropped = prepare_corpus(raw, args.min_count, stop)
    save_corpus(corpus, args.out)
    print(f"{len(corpus)} documents written, {dropped} dropped", file=sys.stderr)
    write_manifest(args.out, "prepare", argv, 0, {"total": time.perf_counter() - t0}, corpora=[args.raw])
    return 0


def _variant(model: str, n_languages: int, language: int | None) -> tuple[bool, list[int]]:
    use_labels = model in ("llda", "plltm")
    if model in ("lda", "llda"):
        if language is None:
            if n_languages != 1:
                raise UsageError(f"--model {model} is unilingual; select one of the corpus's {n_languages} languages with --language")
            language = 0
        if not 0 <= language < n_languages:
            raise UsageError(f"--language {language} out of range (corpus has {n_languages} languages)")
        return use_labels, [language]
    if language is not None:
        raise UsageError(f"--language applies only to lda/llda; {model} uses every language")
    return use_labels, list(range(n_languages))


def cmd_train(args, argv) -> int:
    t0 = time.perf_counter()
    full = load_corpus(args.corpus)
    use_labels, languages = _variant(args.model, full.n_languages, args.language)
    corpus = full.select_languages(languages) if languages != list(range(full.n_languages)) else full
    K = args.k if args.k is not None else full.n_labels
    if use_labels and K < full.n_labels:
        raise UsageError(f"--k {K} is smaller than the {full.n_labels} labels of a labeled model")
    beta = args.beta
    if len(beta) not in (1, len(languages)):
        raise UsageError(f"--beta needs 1 or {len(languages)} values")
    try:
        base = ModelConfig(K=K, L=len(languages), alpha=args.alpha, beta=beta, use_labels=use_labels,
                           sweeps=args.sweeps, burn_in=args.burn_in, seed=args.seed,
                           empty_labels=args.empty_labels, average_samples=args.average)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t_load = time.perf_counter() - t0

    outputs = [Path(args.out)] if args.chains == 1 else [Path(f"{args.out}.chain{c}") for c in range(args.chains)]
    configs = [base if args.chains == 1 else base.with_(seed=args.seed + c) for c in range(args.chains)]

    def run(i):
        t = time.perf_counter()
        model = train(corpus, configs[i])
        save_model(model, outputs[i], include_z=not args.no_z,
                   extra={"variant": args.model, "languages": languages, "label_names": full.label_names})
        return time.perf_counter() - t

    if args.chains > 1:
        with ThreadPoolExecutor(args.chains) as pool:
            secs = list(pool.map(run, range(args.chains)))
    else:
        secs = [run(0)]
    for out, cfg, s in zip(outputs, configs, secs):
        write_manifest(out, "train", argv, cfg.seed, {"load": t_load, "train": s}, cfg, [args.corpus])
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _model_languages(path) -> list[int]:
    header = read_model_header(path)
    return list(header.get("extra", {}).get("languages", range(header["config"]["L"])))


def _to_model_language(languages: list[int], corpus_language: int) -> int:
    if corpus_language not in languages:
        raise UsageError(f"language {corpus_language} is not modelled (model languages: {languages})")
    return languages.index(corpus_language)


def cmd_eval(args, argv) -> int:
    t0 = time.perf_counter()
    if not 0 <= args.fold_burn_in < args.fold_sweeps:
        raise UsageError("--fold-burn-in must be >= 0 and below --fold-sweeps")
    languages = _model_languages(args.model)
    target = _to_model_language(languages, args.target_language)
    model = load_model(args.model)
    test = load_corpus(args.test).select_languages(languages)
    if test.vocab_sizes != model.vocab_sizes:
        raise CorpusError(f"test corpus vocabulary sizes {test.vocab_sizes} differ from the model's {model.vocab_sizes}")
    splits = split_documents(test.documents, target, args.holdout_frac, args.seed)
    if not splits:
        raise EvaluationError("no test document has >= 2 tokens in the target language")
    use_labels = not args.ignore_test_labels
    if args.curve:
        train_corpus = load_corpus(args.curve).select_languages(languages)
        cfg = model.config.with_(sweeps=args.sweeps or model.config.sweeps,
                                 burn_in=min(model.config.burn_in, (args.sweeps or model.config.sweeps) - 1))
        report = perplexity_curve(train_corpus, splits, cfg, args.eval_every, args.fold_sweeps, args.fold_burn_in,
                                  args.seed, use_labels, args.threads)
    else:
        report = evaluate(model, splits, args.fold_sweeps, args.fold_burn_in, args.seed, use_labels, args.threads)
        report.per_iteration = [(model.config.sweeps, report.final)]
    report.write_csv(args.out)
    print(f"perplexity {report.final:.6f} over {report.token_count} tokens in {len(splits)} documents", file=sys.stderr)
    write_manifest(args.out, "eval", argv, args.seed, {"total": time.perf_counter() - t0}, model.config,
                   [args.test] + ([args.curve] if args.curve else []))
    return 0


def cmd_topics(args, argv) -> int:
    languages = _model_languages(args.model)
    lang = _to_model_language(languages, args.language)
    model = load_model(args.model)
    vocabs, label_names = load_sidecars(args.corpus)
    vocab = vocabs[args.language]
    if len(vocab) != model.vocab_sizes[lang]:
        raise CorpusError("corpus vocabulary does not match the model")
    if args.n > len(vocab):
        raise UsageError(f"--n {args.n} exceeds the vocabulary size {len(vocab)}")
    names = label_names if model.config.use_labels and len(label_names) == model.K else None
    out = args.out or "/dev/stdout"
    write_top_terms(model, vocab, lang, args.n, out, names)
    if args.out:
        write_manifest(args.out, "topics", argv, 0, {}, model.config, [args.corpus])
    return 0


def cmd_intrude(args, argv) -> int:
    languages = _model_languages(args.model)
    lang = _to_model_language(languages, args.language)
    model = load_model(args.model)
    vocabs, _ = load_sidecars(args.corpus)
    vocab = vocabs[args.language]
    if len(vocab) != model.vocab_sizes[lang]:
        raise CorpusError("corpus vocabulary does not match the model")
    topics = [args.topic] if args.topic is not None else range(model.K)
    if any(not 0 <= k < model.K for k in topics):
        raise UsageError(f"--topic must lie in [0, {model.K})")
    streams = np.random.SeedSequence(args.seed).spawn(model.K)
    tasks = [generate_intrusion_task(model, k, lang, np.random.default_rng(streams[k]), vocab,
                                     exclude_top=args.exclude_top, home_top=args.home_top) for k in topics]
    for t in tasks:
        t.language_id = args.language
    key = args.key or args.out + ".key"
    write_intrusion_tasks(tasks, args.out, key)
    write_manifest(args.out, "intrude", argv, args.seed, {}, model.config, [args.corpus])
    return 0


def cmd_synth(args, argv) -> int:
    t0 = time.perf_counter()
    vocab = args.vocab if len(args.vocab) == args.langs else args.vocab * args.langs
    lengths = args.doc_length if len(args.doc_length) == args.langs else args.doc_length * args.langs
    if len(vocab) != args.langs or len(lengths) != args.langs:
        raise UsageError("--vocab and --doc-length need 1 or --langs values")
    rng = np.random.default_rng(args.seed)
    total = args.docs + args.test_docs
    corpus, truth = generate_corpus(args.k, args.langs, vocab, total, args.labels_mean, lengths, args.alpha,
                                    args.beta, rng, labeled=not args.unlabeled)
    out = Path(args.out)
    save_corpus(corpus.subset(range(args.docs)), out.with_name(out.name + ".corp"))
    if args.test_docs:
        save_corpus(corpus.subset(range(args.docs, total)), out.with_name(out.name + ".test.corp"))
    save_ground_truth(truth, out.with_name(out.name + ".truth"))
    write_manifest(out.with_name(out.name + ".corp"), "synth", argv, args.seed, {"total": time.perf_counter() - t0})
    return 0


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plltm", description="Polylingual labeled topic models by collapsed Gibbs sampling.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="build vocabularies and encode a raw corpus")
    s.add_argument("--raw", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-count", type=_positive, default=5)
    s.add_argument("--stopwords")
    s.add_argument("--vocab-from", help="reuse the vocabularies and labels of an encoded corpus")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train a model variant")
    s.add_argument("--corpus", required=True)
    s.add_argument("--model", choices=MODELS, default="plltm")
    s.add_argument("--language", type=int, help="corpus language for lda/llda")
    s.add_argument("--k", type=_positive, help="topics (default: number of labels)")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--beta", type=_floats, default=(0.01,), help="one value or one per language")
    s.add_argument("--sweeps", type=_positive, default=500)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--average", action="store_true", help="average phi over post-burn-in sweeps")
    s.add_argument("--empty-labels", choices=("all-topics", "strict"), default="all-topics")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--chains", type=_positive, default=1)
    s.add_argument("--no-z", action="store_true", help="omit final assignments from the model file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="held-out perplexity")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--holdout-frac", type=_unit_open, default=0.5, help="share of target tokens that is observed")
    s.add_argument("--target-language", type=int, default=0)
    s.add_argument("--fold-sweeps", type=_positive, default=200)
    s.add_argument("--fold-burn-in", type=int, default=100)
    s.add_argument("--ignore-test-labels", action="store_true")
    s.add_argument("--curve", metavar="TRAIN_CORPUS", help="retrain on this corpus and score every --eval-every sweeps")
    s.add_argument("--eval-every", type=_positive, default=10)
    s.add_argument("--sweeps", type=_positive)
    s.add_argument("--threads", type=_positive)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("topics", help="top terms per topic as TSV")
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True, help="encoded corpus whose vocabularies the model was trained on")
    s.add_argument("--n", type=_positive, default=5)
    s.add_argument("--language", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_topics)

    s = sub.add_parser("intrude", help="word-intrusion tasks and answer key")
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--topic", type=int)
    s.add_argument("--language", type=int, default=0)
    s.add_argument("--exclude-top", type=_positive, default=30)
    s.add_argument("--home-top", type=_positive, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--key")
    s.set_defaults(func=cmd_intrude)

    s = sub.add_parser("synth", help="sample a synthetic corpus with ground truth")
    s.add_argument("--k", type=_positive, required=True)
    s.add_argument("--langs", type=_positive, default=1)
    s.add_argument("--docs", type=_positive, required=True)
    s.add_argument("--test-docs", type=int, default=0)
    s.add_argument("--vocab", type=_ints, required=True)
    s.add_argument("--doc-length", type=_floats, default=(60.0,))
    s.add_argument("--labels-mean", type=float, default=2.0)
    s.add_argument("--unlabeled", action="store_true")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--beta", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output prefix")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        for dest in ("out", "key"):
            if getattr(args, dest, None):
                Path(getattr(args, dest)).parent.mkdir(parents=True, exist_ok=True)
        return args.func(args, argv)
    except UsageError as exc:
        print(f"plltm: error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"plltm: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

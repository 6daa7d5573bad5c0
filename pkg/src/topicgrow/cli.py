"""Command-line entry point: synth, train, and eval subcommands.

Every run requires an explicit --seed and writes a config.json echo with the
resolved parameters and library versions, so any output can be reproduced
exactly. Exit codes: 0 success, 1 usage error, 2 data error, 3 algorithmic
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autostop import (
    StopDetector,
    diversity,
    train_parameter_free,
    train_weakly_supervised,
)
from .corpus import load_corpus, read_stopwords, reindex_corpus, write_sparse_corpus
from .errors import AlgorithmError, DataError
from .metrics import (
    CooccurrenceStats,
    PmiConfig,
    perplexity,
    pmi_coherence,
    topic_coverage_error,
    topic_quality_error,
)
from .modelio import read_model, write_json, write_model, write_trace
from .nplsa import train_nplsa
from .plsa import EmConfig, train_plsa
from .synthgen import PROFILES, RNG_ALGORITHM, SynthConfig, generate_corpus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ALGORITHM = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser):
    parser.add_argument("--seed", type=int, required=True,
                        help="run seed; required so every run is reproducible")
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    parser.add_argument("--verbose", action="store_true", help="log progress at INFO level")


def build_parser():
    parser = _Parser(prog="topicgrow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    _add_common(synth)
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--profile", choices=sorted(PROFILES), default="paper")
    synth.add_argument("--docs", type=int, help="override: number of documents")
    synth.add_argument("--doc-len", type=int, help="override: tokens per document")
    synth.add_argument("--topics", type=int, help="override: number of topics")
    synth.add_argument("--vocab", type=int, help="override: vocabulary size")
    synth.add_argument("--alpha", type=float, default=0.1)
    synth.add_argument("--beta", type=float, default=0.01)
    synth.add_argument("--min-topic-dist", type=float, default=0.5)

    train = sub.add_parser("train", help="train a topic model on a corpus file")
    _add_common(train)
    train.add_argument("--algo", choices=["plsa", "nplsa", "auto", "query"], required=True)
    train.add_argument("--corpus", required=True, help="text or sparse corpus file")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--k", type=int, help="topic count (plsa only)")
    train.add_argument("--epsilon", type=float, help="spawn threshold in nats (nplsa only)")
    train.add_argument("--query", help="whitespace-separated query terms (query only)")
    train.add_argument("--lambda", dest="lam", type=float, default=0.5,
                       help="query/background mixture weight for pseudo feedback")
    train.add_argument("--patience", type=int, default=3,
                       help="stalled iterations before the stop detector fires")
    train.add_argument("--max-spawns", type=int,
                       help="cap growth iterations (auto/query; full-curve runs)")
    train.add_argument("--max-topics", type=int, default=1000)
    train.add_argument("--order-seed", type=int,
                       help="shuffle the document sweep order (nplsa only)")
    train.add_argument("--max-iters", type=int, default=200)
    train.add_argument("--rel-tol", type=float, default=1e-5)
    train.add_argument("--floor", type=float, default=1e-9)
    train.add_argument("--fold-in-iters", type=int, default=50)
    train.add_argument("--fold-in-tol", type=float, default=1e-6)
    train.add_argument("--min-df", type=int, default=1, help="text ingestion: df filter")
    train.add_argument("--stopwords", help="text ingestion: stopword file")
    train.add_argument("--threads", type=int, default=1,
                       help="data-parallelism cap (this build computes serially)")

    ev = sub.add_parser("eval", help="evaluate a trained model")
    _add_common(ev)
    ev.add_argument("--model", required=True, help="model.json from a train run")
    ev.add_argument("--out", required=True, help="output directory for metrics.json")
    ev.add_argument("--corpus", help="held-out corpus for perplexity")
    ev.add_argument("--truth", help="truth.json for quality/coverage error")
    ev.add_argument("--reference", help="reference corpus for PMI coherence")
    ev.add_argument("--split-fraction", type=float, default=0.8)
    ev.add_argument("--top-n", type=int, default=20, help="words per topic for PMI")
    ev.add_argument("--min-df", type=int, default=1)
    ev.add_argument("--stopwords", help="stopword file for text corpora")
    return parser


def _read_config_file(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"bad config line {lineno}: {line!r}")
            key, value = line.split("=", 1)
            flag = "--" + key.strip().replace("_", "-")
            pairs.extend([flag, value.strip()])
    return pairs


def _inject_config(argv):
    """Insert config-file pairs after the subcommand so real flags override them."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config requires a path")
    pairs = _read_config_file(argv[idx + 1])
    rest = argv[:idx] + argv[idx + 2 :]
    if not rest:
        raise UsageError("missing subcommand")
    return rest[:1] + pairs + rest[1:]


def _versions():
    return {
        "topicgrow": __version__,
        "numpy": np.__version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
    }


def _echo(args, extra=None):
    payload = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    payload["versions"] = _versions()
    if extra:
        payload.update(extra)
    return payload


def _cmd_synth(args, out_dir):
    params = dict(PROFILES[args.profile])
    for key, flag in (("n_docs", "docs"), ("doc_len", "doc_len"),
                      ("n_topics", "topics"), ("vocab_size", "vocab")):
        value = getattr(args, flag)
        if value is not None:
            params[key] = value
    config = SynthConfig(
        seed=args.seed,
        alpha=args.alpha,
        beta=args.beta,
        min_topic_dist=args.min_topic_dist,
        **params,
    )
    corpus, truth = generate_corpus(config)
    write_sparse_corpus(corpus, out_dir / "corpus.sparse")
    write_json(
        out_dir / "truth.json",
        {
            "topics": truth.topics.tolist(),
            "mixes": truth.doc_mixes.tolist(),
            "config": {
                "seed": config.seed,
                "n_docs": config.n_docs,
                "doc_len": config.doc_len,
                "n_topics": config.n_topics,
                "vocab_size": config.vocab_size,
                "alpha": config.alpha,
                "beta": config.beta,
                "min_topic_dist": config.min_topic_dist,
                "rng": RNG_ALGORITHM,
                "vocab": corpus.vocab.terms,
            },
        },
    )
    z = np.stack([z for z, _ in truth.assignments])
    w = np.stack([w for _, w in truth.assignments])
    np.save(out_dir / "assignments_topics.npy", z)
    np.save(out_dir / "assignments_words.npy", w)
    write_json(out_dir / "config.json", _echo(args))
    print(f"wrote {corpus.n_docs} docs, {config.n_topics} truth topics to {out_dir}")
    return EXIT_OK


def _em_config(args):
    return EmConfig(
        seed=args.seed,
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        smoothing_floor=args.floor,
        fold_in_max_iters=args.fold_in_iters,
        fold_in_rel_tol=args.fold_in_tol,
    )


def _mutually_exclusive(args):
    needed = {"plsa": "k", "nplsa": "epsilon", "query": "query"}
    for algo, flag in needed.items():
        value = getattr(args, flag)
        if args.algo == algo and value is None:
            raise UsageError(f"--algo {algo} requires --{flag}")
        if args.algo != algo and value is not None:
            raise UsageError(f"--{flag} only applies to --algo {algo}")


def _cmd_train(args, out_dir):
    _mutually_exclusive(args)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    stopwords = read_stopwords(args.stopwords) if args.stopwords else None
    corpus = load_corpus(args.corpus, min_df=args.min_df, stopwords=stopwords)
    config = _em_config(args)
    meta = {
        "algo": args.algo,
        "seed": args.seed,
        "smoothing_floor": config.smoothing_floor,
    }
    mixes = None
    query_cols = False

    if args.algo == "plsa":
        topics, mixes, trace = train_plsa(corpus, args.k, config)
    elif args.algo == "nplsa":
        state, trace = train_nplsa(
            corpus,
            args.epsilon,
            config,
            max_topics=args.max_topics,
            order_seed=args.order_seed,
        )
        topics = state.topics
        mixes = np.zeros((corpus.n_docs, state.k))
        for d, mix in enumerate(state.mixes):
            mixes[d, : mix.size] = mix
        meta["epsilon"] = args.epsilon
    elif args.algo == "auto":
        detector = StopDetector(mode="maximize", patience=args.patience)
        topics, mixes, trace = train_parameter_free(
            corpus, config, detector=detector,
            max_topics=args.max_topics, max_spawns=args.max_spawns,
        )
        meta["best_k"] = detector.best_k
        meta["best_diversity"] = detector.best_score
    else:
        detector = StopDetector(mode="minimize", patience=args.patience)
        topics, trace = train_weakly_supervised(
            corpus, args.query.split(), config, lam=args.lam, detector=detector,
            max_topics=args.max_topics, max_spawns=args.max_spawns,
        )
        meta["query"] = args.query
        meta["best_k"] = detector.best_k
        meta["best_query_distance"] = detector.best_score
        query_cols = True

    meta["K"] = int(topics.shape[0])
    meta["iters"] = len(trace)
    if args.algo == "plsa":
        meta["k"] = args.k
    write_model(out_dir / "model.json", corpus.vocab, topics, mixes=mixes, meta=meta)
    write_trace(out_dir / "trace.csv", trace, query_cols=query_cols)
    write_json(out_dir / "config.json", _echo(args))
    final_ll = next((r.loglik for r in reversed(trace) if r.loglik is not None), None)
    print(f"trained {args.algo}: K={meta['K']} loglik={final_ll} ({len(trace)} trace rows)")
    return EXIT_OK


def _truth_errors(topics, vocab, truth_path):
    import json

    with open(truth_path, encoding="utf-8") as fh:
        truth = json.load(fh)
    truth_topics = np.asarray(truth["topics"], dtype=float)
    truth_vocab = truth.get("config", {}).get("vocab")
    if truth_vocab is None:
        raise DataError("truth.json lacks config.vocab; cannot align vocabularies")
    index = {t: i for i, t in enumerate(truth_vocab)}
    aligned = np.zeros((topics.shape[0], len(truth_vocab)))
    for j, term in enumerate(vocab.terms):
        pos = index.get(term)
        if pos is not None:
            aligned[:, pos] = topics[:, j]
    return (
        topic_quality_error(aligned, truth_topics),
        topic_coverage_error(aligned, truth_topics),
    )


def _cmd_eval(args, out_dir):
    vocab, topics, _, meta = read_model(args.model)
    report = {
        "K": int(topics.shape[0]),
        "tqe": None,
        "tce": None,
        "pmi": None,
        "perplexity": None,
        "diversity": diversity(topics) if topics.shape[0] >= 2 else None,
    }
    if args.truth:
        report["tqe"], report["tce"] = _truth_errors(topics, vocab, args.truth)
    stopwords = read_stopwords(args.stopwords) if args.stopwords else None
    if args.corpus:
        held_out = load_corpus(args.corpus, min_df=args.min_df, stopwords=stopwords)
        held_out = reindex_corpus(held_out, vocab)
        report["perplexity"] = perplexity(
            held_out,
            topics,
            EmConfig(seed=args.seed),
            split_fraction=args.split_fraction,
        )
    if args.reference:
        reference = load_corpus(args.reference, min_df=args.min_df, stopwords=stopwords)
        stats = CooccurrenceStats.from_corpus(reference)
        report["pmi"] = pmi_coherence(topics, vocab, stats, PmiConfig(top_n=args.top_n))
    report["config"] = _echo(args, extra={"model_meta": meta})
    write_json(out_dir / "metrics.json", report)
    summary = {k: report[k] for k in ("K", "tqe", "tce", "pmi", "perplexity", "diversity")}
    print(f"metrics: {summary}")
    return EXIT_OK


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = _inject_config(list(argv))
        parser = build_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        from pathlib import Path

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            return _cmd_synth(args, out_dir)
        if args.command == "train":
            return _cmd_train(args, out_dir)
        return _cmd_eval(args, out_dir)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AlgorithmError as exc:
        print(f"algorithm failure: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM


if __name__ == "__main__":
    sys.exit(main())

"""Command-line frontend: `dca fit`, `dca topics`, `dca eval`.

Every command is deterministic given --seed.  Exit codes: 0 success,
2 usage, 3 data error, 4 numeric failure.
"""

import argparse
import os
import sys

import numpy as np

from .corpus import load_docword, load_groups, load_vocab, split_groups
from .errors import DataError, DomainError, NumericError
from .evaluate import CompareConfig, InferConfig, compare_k, export_features, infer_document
from .gibbs import ChainConfig, run_chain
from .mathfn import make_rng
from .model import CGP, DM, GP, ModelParams, init_params, load_model, save_model
from .variational import FitConfig, NmfConfig, fit_nmf, fit_variational

_DEFAULT_ALGORITHM = {DM: "variational", GP: "collapsed", CGP: "collapsed"}


def _parse_prior(text, k, name, parser):
    try:
        values = [float(part) for part in str(text).split(",")]
    except ValueError:
        parser.error(f"--{name} expects a number or comma-separated list")
    if len(values) == 1:
        return np.full(k, values[0])
    if len(values) != k:
        parser.error(f"--{name} needs 1 or {k} values, got {len(values)}")
    return np.asarray(values)


def _header(kind, params):
    return (
        f"# dca-{kind} version=1 family={params.family} k={params.num_components}"
        f" seed={params.seed}\n"
    )


def _write_scores(path, params, scores):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_header("scores", params))
        handle.write(
            "doc\t" + "\t".join(f"score_{k + 1}" for k in range(scores.shape[1])) + "\n"
        )
        for i, row in enumerate(scores):
            handle.write(str(i + 1) + "\t" + "\t".join(repr(v) for v in row) + "\n")


def _write_report(path, params, report, timings):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_header("fit-report", params))
        handle.write(report.to_tsv(include_seconds=timings))


def _load_corpus(args, parser):
    corpus = load_docword(args.data)
    if getattr(args, "vocab", None):
        vocab = load_vocab(args.vocab)
        if len(vocab) != corpus.num_words:
            raise DataError(
                f"vocabulary holds {len(vocab)} tokens but corpus declares"
                f" {corpus.num_words} word ids"
            )
        corpus.vocab = vocab
    if getattr(args, "groups", None):
        corpus = split_groups(corpus, load_groups(args.groups, corpus.num_words))
    return corpus


def cmd_fit(args, parser):
    corpus = _load_corpus(args, parser)
    family = args.model
    algorithm = args.algorithm or _DEFAULT_ALGORITHM[family]
    if args.rho is not None and family != CGP:
        parser.error("--rho only applies to --model cgp")
    if family == CGP and algorithm in ("variational", "nmf"):
        parser.error(f"--algorithm {algorithm} is not available for cgp")
    if algorithm == "nmf" and family != GP:
        parser.error("--algorithm nmf only applies to --model gp")
    if corpus.group_of_word is not None and family != DM:
        parser.error("--groups requires --model dm")
    if corpus.group_of_word is not None and algorithm in ("variational", "nmf"):
        parser.error("grouped corpora fit with --algorithm gibbs or collapsed")
    os.makedirs(args.out, exist_ok=True)
    k = args.k
    rng = make_rng(args.seed)
    if algorithm == "nmf":
        theta, scores, report = fit_nmf(
            corpus, NmfConfig(num_components=k, iterations=args.cycles, seed=args.seed)
        )
        params = ModelParams(
            family=GP, theta=theta, alpha=np.zeros(k), beta=np.zeros(k),
            gamma=_parse_prior(args.gamma, corpus.num_words, "gamma", parser),
            seed=args.seed,
        ).validate(strict=False)
    else:
        alpha = _parse_prior(args.alpha, k, "alpha", parser)
        gamma = _parse_prior(args.gamma, corpus.num_words, "gamma", parser)
        beta = _parse_prior(args.beta, k, "beta", parser) if family in (GP, CGP) else None
        rho = None
        if family == CGP:
            rho = _parse_prior(args.rho if args.rho is not None else 0.5, k, "rho", parser)
        params0 = init_params(
            family, k, corpus.num_words, alpha, beta=beta, rho=rho, gamma=gamma,
            rng=rng, group_of_word=corpus.group_of_word,
            num_groups=corpus.num_groups, seed=args.seed,
        )
        if algorithm == "variational":
            fit = fit_variational(
                corpus, params0,
                FitConfig(max_cycles=args.cycles, tol=args.tol, threads=args.threads),
            )
            params, report = fit.params, fit.report
            scores = fit.doc_scores()
        else:
            chain = ChainConfig(
                burn_in=args.burn_in, samples=args.samples, thin=args.thin,
                seed=args.seed, algorithm="direct" if algorithm == "gibbs" else "collapsed",
            )
            summary = run_chain(corpus, params0, chain)
            params, report = summary.params, summary.report
            scores = summary.mean_scores
    save_model(params, os.path.join(args.out, "model.json"))
    _write_scores(os.path.join(args.out, "scores.tsv"), params, np.asarray(scores))
    _write_report(os.path.join(args.out, "fit_report.tsv"), params, report, args.timings)
    return 0


def cmd_topics(args, parser):
    params = load_model(args.model)
    if params.group_of_word is not None:
        _print_membership(params, args)
        return 0
    if not args.vocab:
        raise DataError("topics needs --vocab to name the words")
    vocab = load_vocab(args.vocab)
    if len(vocab) != params.num_words:
        raise DataError(
            f"vocabulary holds {len(vocab)} tokens but model declares"
            f" {params.num_words} word ids"
        )
    print("component\trank\ttoken\tweight")
    for k in range(params.num_components):
        column = params.theta[:, k]
        order = np.argsort(-column, kind="stable")[: max(args.top, 0)]
        for rank, j in enumerate(order, start=1):
            print(f"{k + 1}\t{rank}\t{vocab[j]}\t{column[j]!r}")
    return 0


def _print_membership(params, args):
    """Grouped models: K x G table of each component's weight on the first
    word of every group (for vote pairs, the probability of a yea)."""
    vocab = load_vocab(args.vocab) if args.vocab else None
    first_word = np.full(params.num_groups, -1, dtype=np.int64)
    for j in range(params.num_words - 1, -1, -1):
        g = params.group_of_word[j]
        if g >= 0:
            first_word[g] = j
    labels = [
        vocab[j] if vocab else f"word{j + 1}" for j in first_word
    ]
    print("component\t" + "\t".join(labels))
    for k in range(params.num_components):
        row = [repr(float(params.theta[j, k])) for j in first_word]
        print(f"{k + 1}\t" + "\t".join(row))
    return 0


def cmd_eval(args, parser):
    corpus = _load_corpus(args, parser)
    if args.k_sweep:
        k_list = [int(part) for part in args.k_sweep.split(",")]
        if "," in str(args.alpha):
            parser.error("--k-sweep needs a scalar --alpha")
        config = CompareConfig(
            family=args.model, engine=args.engine, seed=args.seed,
            alpha=float(args.alpha),
            beta=float(args.beta) if args.beta is not None else 1.0,
            rho=float(args.rho) if args.rho is not None else None,
            gamma=float(args.gamma),
            fit=FitConfig(max_cycles=args.cycles, tol=args.tol),
            chain=ChainConfig(
                burn_in=args.burn_in, samples=args.samples, thin=args.thin
            ),
            holdout_fraction=args.holdout,
            log_base_2=args.log2,
        )
        rows = compare_k(corpus, k_list, config=config)
        print("k\tnll")
        for k, nll in rows:
            print(f"{k}\t{nll!r}")
        best = min(rows, key=lambda row: row[1])[0]
        print(f"# selected k={best}")
        return 0
    if not args.model_file:
        parser.error("eval needs --model-file (or --k-sweep)")
    params = load_model(args.model_file)
    if params.num_words != corpus.num_words:
        raise DataError(
            f"model covers {params.num_words} word ids but corpus declares"
            f" {corpus.num_words}"
        )
    config = InferConfig(seed=args.seed)
    method = args.method
    rows = []
    feats = np.zeros((corpus.num_docs, params.num_components))
    for i in range(corpus.num_docs):
        scores, logp = infer_document(corpus.doc(i), params, method=method, config=config)
        rows.append((i, scores, logp))
        if params.family == DM:
            feats[i] = scores * corpus.doc_lengths[i]
        elif params.family == CGP:
            live = params.rho < 1.0
            feats[i, live] = (
                scores[live] / (1.0 - params.rho[live]) * (1.0 + params.beta[live])
                - params.alpha[live]
            )
        else:
            feats[i] = scores * (1.0 + params.beta) - params.alpha
    print(f"# method={method}")
    print(
        "doc\tlog_prob\t"
        + "\t".join(f"score_{k + 1}" for k in range(params.num_components))
    )
    total = 0.0
    for i, scores, logp in rows:
        total += logp
        print(f"{i + 1}\t{logp!r}\t" + "\t".join(repr(v) for v in scores))
    print(f"# total_log_prob\t{total!r}")
    if args.export_features:
        export_features(corpus, params, feats + params.alpha[None, :],
                        path=args.export_features)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dca",
        description="Discrete component analysis for sparse count data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to a docword corpus")
    fit.add_argument("--data", required=True, help="docword file")
    fit.add_argument("--vocab", help="vocabulary file (token per line)")
    fit.add_argument("--groups", help="word-group file ('wordId groupId' lines)")
    fit.add_argument("--model", required=True, choices=[GP, CGP, DM])
    fit.add_argument(
        "--algorithm", choices=["variational", "gibbs", "collapsed", "nmf"],
        help="default: variational for dm, collapsed for gp/cgp",
    )
    fit.add_argument("--k", type=int, required=True)
    fit.add_argument("--alpha", default="1.0", help="scalar or per-k list")
    fit.add_argument("--beta", default="1.0", help="scalar or per-k list (gp/cgp)")
    fit.add_argument("--rho", default=None, help="scalar or per-k list (cgp)")
    fit.add_argument("--gamma", default="0.5", help="loading prior weight")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--cycles", type=int, default=200)
    fit.add_argument("--tol", type=float, default=1e-6)
    fit.add_argument("--burn-in", type=int, default=200, dest="burn_in")
    fit.add_argument("--samples", type=int, default=800)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--threads", type=int, default=1)
    fit.add_argument("--timings", action="store_true",
                     help="include wall_seconds in fit_report.tsv")
    fit.add_argument("--out", required=True, help="output directory")

    topics = sub.add_parser("topics", help="inspect a fitted model")
    topics.add_argument("--model", required=True, help="model.json file")
    topics.add_argument("--vocab", help="vocabulary file")
    topics.add_argument("--top", type=int, default=10)

    ev = sub.add_parser("eval", help="score documents or sweep component counts")
    ev.add_argument("--data", required=True)
    ev.add_argument("--vocab", help="vocabulary file")
    ev.add_argument("--groups", help="word-group file")
    ev.add_argument("--model-file", dest="model_file", help="fitted model.json")
    ev.add_argument("--method", choices=["variational", "gibbs"], default="variational")
    ev.add_argument("--k-sweep", dest="k_sweep", help="comma list of K values")
    ev.add_argument("--model", default=DM, choices=[GP, CGP, DM],
                    help="family for --k-sweep fits")
    ev.add_argument("--engine", default="variational",
                    choices=["variational", "gibbs", "collapsed"])
    ev.add_argument("--alpha", default="1.0")
    ev.add_argument("--beta", default=None)
    ev.add_argument("--rho", default=None)
    ev.add_argument("--gamma", default="0.5")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--cycles", type=int, default=200)
    ev.add_argument("--tol", type=float, default=1e-6)
    ev.add_argument("--burn-in", type=int, default=200, dest="burn_in")
    ev.add_argument("--samples", type=int, default=800)
    ev.add_argument("--thin", type=int, default=1)
    ev.add_argument("--holdout", type=float, default=0.0)
    ev.add_argument("--log2", action="store_true",
                    help="report base-2 logs (roll-call convention)")
    ev.add_argument("--export-features", dest="export_features",
                    help="write component-count features to this file")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(args, parser)
        if args.command == "topics":
            return cmd_topics(args, parser)
        return cmd_eval(args, parser)
    except DataError as exc:
        print(f"dca: data error: {exc}", file=sys.stderr)
        return 3
    except (DomainError, NumericError) as exc:
        print(f"dca: numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

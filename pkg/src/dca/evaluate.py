"""Held-out scoring, model-order comparison, enumeration oracle, features.

infer_document freezes the loading matrix and infers a single new
document's scores, either by running its surrogate updates to convergence
(variational; the returned log probability is a lower bound) or by a
per-document Gibbs chain for the scores plus a prior-sample Monte Carlo
estimate of the document's marginal log probability.  Both estimators are
exposed because neither dominates; callers should report which they used.

compare_k refits the model for each candidate component count under
identical seeds and reports negative log probability, either on the
training data (default) or on a held-out split carved out once and shared
by every candidate.
"""

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Corpus, make_corpus
from .errors import DataError, DomainError, OutOfVocabularyError
from .gibbs import (ChainConfig, conditional_loglik, direct_sample_assignments,
                    direct_sample_scores, run_chain)
from .mathfn import make_rng, sample_gamma, worker_rng
from .model import (CGP, DM, GP, ModelParams, init_params,
                    posterior_mean_scores)
from .variational import (FitConfig, VariationalState, _e_step, fit_variational,
                          init_state)

# Enumeration refuses anything bigger than this; the oracle is for tests.
_MAX_CELLS = 6
_MAX_LENGTH = 4


@dataclass
class InferConfig:
    max_cycles: int = 500
    tol: float = 1e-10
    seed: int = 0
    burn_in: int = 200
    samples: int = 800
    thin: int = 1
    prior_draws: int = 20000  # Monte Carlo draws for the marginal estimate


def _check_vocabulary(doc, params):
    word_ids = np.asarray(doc[0], dtype=np.int64)
    bad = (word_ids < 0) | (word_ids >= params.num_words)
    if params.group_of_word is not None:
        good = ~bad
        bad = bad.copy()
        bad[good] |= params.group_of_word[word_ids[good]] < 0
    if np.any(bad):
        raise OutOfVocabularyError(word_ids[bad] + 1)


def infer_document(new_doc, params, method="variational", config=None):
    """Infer scores and a log-probability figure for one new document.

    The loading matrix is frozen.  Returns (scores, log_prob) where
    log_prob is a lower bound (variational) or a Monte Carlo estimate over
    prior score draws (gibbs).  Word ids outside the model's vocabulary are
    rejected up front.
    """
    config = config or InferConfig()
    params.validate()
    _check_vocabulary(new_doc, params)
    word_ids = np.asarray(new_doc[0], dtype=np.int64)
    counts = np.asarray(new_doc[1], dtype=np.int64)
    doc = (word_ids, counts)
    if method == "variational":
        if params.family == CGP or params.group_of_word is not None:
            raise DataError(
                "variational inference covers ungrouped gp/dm; use method='gibbs'"
            )
        state = init_state(doc, params)
        bound = None
        for _ in range(config.max_cycles):
            state, _contrib, new_bound = _e_step(doc, params, state)
            if bound is not None and abs(new_bound - bound) <= config.tol * max(
                1.0, abs(bound)
            ):
                bound = new_bound
                break
            bound = new_bound
        if params.family == GP:
            scores = state.a / (1.0 + params.beta)
        else:
            scores = state.a / state.a.sum()
        return scores, float(bound)
    if method != "gibbs":
        raise DataError(f"unknown inference method {method!r}")
    return _infer_gibbs(doc, params, config)


def _infer_gibbs(doc, params, config):
    rng_chain = worker_rng(config.seed, 1)
    rng_mc = worker_rng(config.seed, 2)
    k = params.num_components
    length = int(doc[1].sum()) if len(doc[1]) else 0
    if length:
        c = np.bincount(rng_chain.integers(0, k, size=length), minlength=k)
    else:
        c = np.zeros(k, dtype=np.int64)
    scores_sum = np.zeros(k)
    kept = 0
    total = config.burn_in + config.samples * config.thin
    for cycle in range(1, total + 1):
        sampled, _mask = direct_sample_scores(c, params, rng_chain)
        table = direct_sample_assignments(doc, sampled, params, rng_chain)
        c = table.sum(axis=0)
        if cycle > config.burn_in and (cycle - config.burn_in) % config.thin == 0:
            scores_sum += posterior_mean_scores(c, params)
            kept += 1
    scores = scores_sum / max(kept, 1)
    # Marginal log probability by Monte Carlo over prior score draws.
    values = np.empty(config.prior_draws)
    for t in range(config.prior_draws):
        prior = _sample_prior_scores(params, rng_mc)
        values[t] = conditional_loglik(doc, prior, params)
    peak = values.max()
    log_prob = float(peak + np.log(np.mean(np.exp(values - peak))))
    return scores, log_prob


def _sample_prior_scores(params, rng):
    k = params.num_components
    if params.family == DM:
        draws = np.empty(k)
        while True:
            for kk in range(k):
                draws[kk] = sample_gamma(params.alpha[kk], 1.0, rng)
            total = draws.sum()
            if total > 0.0:
                return draws / total
    scores = np.empty(k)
    for kk in range(k):
        if params.family == CGP and rng.random() < params.rho[kk]:
            scores[kk] = 0.0
        else:
            scores[kk] = sample_gamma(params.alpha[kk], params.beta[kk], rng)
    return scores


@dataclass
class CompareConfig:
    family: str = DM
    engine: str = "variational"  # "variational", "gibbs" (direct) or "collapsed"
    seed: int = 0
    alpha: object = 1.0
    beta: object = 1.0
    rho: object = None
    gamma: object = 0.5
    fit: FitConfig = field(default_factory=FitConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)
    holdout_fraction: float = 0.0  # 0 scores the training data itself
    log_base_2: bool = False
    infer: InferConfig = field(default_factory=InferConfig)


def _subset(corpus, indices):
    docs = [corpus.doc(i) for i in indices]
    sub = make_corpus(docs, corpus.num_words, vocab=corpus.vocab)
    if corpus.group_of_word is None:
        return sub
    return Corpus(
        sub.doc_ptr, sub.word_ids, sub.counts, sub.num_words, vocab=corpus.vocab,
        group_of_word=corpus.group_of_word, num_groups=corpus.num_groups,
    )


def holdout_split(corpus, fraction, rng):
    """Deterministically split off a held-out document set."""
    if not 0.0 < fraction < 1.0:
        raise DataError("holdout fraction must lie in (0, 1)")
    order = rng.permutation(corpus.num_docs)
    n_hold = max(1, int(round(fraction * corpus.num_docs)))
    if n_hold >= corpus.num_docs:
        raise DataError("holdout split would leave no training documents")
    hold, train = np.sort(order[:n_hold]), np.sort(order[n_hold:])
    return _subset(corpus, train), _subset(corpus, hold)


def _fit_one(corpus, num_components, config):
    rng = make_rng(config.seed)
    params0 = init_params(
        config.family, num_components, corpus.num_words, config.alpha,
        beta=config.beta if config.family in (GP, CGP) else None,
        rho=config.rho if config.family == CGP else None,
        gamma=config.gamma, rng=rng,
        group_of_word=corpus.group_of_word, num_groups=corpus.num_groups,
        seed=config.seed,
    )
    if config.engine == "variational":
        fit = fit_variational(corpus, params0, config.fit)
        return fit.params, fit.report.final_value
    chain = replace(config.chain, seed=config.seed,
                    algorithm="direct" if config.engine == "gibbs" else "collapsed")
    summary = run_chain(corpus, params0, chain)
    kept_rows = summary.report.rows[chain.burn_in:]
    mean_loglik = float(np.mean([row[1] for row in kept_rows]))
    return summary.params, mean_loglik


def compare_k(corpus, k_list, engine=None, config=None):
    """Fit every candidate K under identical seeds and report NLL.

    Returns a list of (K, nll) rows; lower is better.  With a holdout
    fraction the NLL is the summed held-out document log probability under
    the fitted model, otherwise the engine's training figure (final bound
    or mean conditional log likelihood).  Logs are natural unless
    log_base_2 is set (roll-call reporting convention).
    """
    if not k_list:
        raise DataError("k_list must be nonempty")
    config = config or CompareConfig()
    if engine is not None:
        config = replace(config, engine=engine)
    if config.holdout_fraction > 0.0:
        train, hold = holdout_split(
            corpus, config.holdout_fraction, worker_rng(config.seed, 97)
        )
    else:
        train, hold = corpus, None
    rows = []
    for num_components in k_list:
        params, train_value = _fit_one(train, int(num_components), config)
        if hold is None:
            total = train_value
        else:
            method = "variational" if config.engine == "variational" else "gibbs"
            infer_cfg = replace(config.infer, seed=config.seed)
            total = 0.0
            for i in range(hold.num_docs):
                _scores, logp = infer_document(
                    hold.doc(i), params, method=method, config=infer_cfg
                )
                total += logp
        nll = -total
        if config.log_base_2:
            nll /= math.log(2.0)
        rows.append((int(num_components), float(nll)))
    return rows


def _compositions(total, bins):
    if bins == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, bins - 1):
            yield (first,) + rest


def brute_force_marginal(doc, params):
    """Exact log p(counts | params) by enumerating assignment tables.

    Independent of the likelihood evaluators in dca.model: the per-table
    terms are written out here from scratch (math.lgamma only), so
    agreement between the two is evidence rather than tautology.  Refuses
    instances beyond J*K <= 6 or L > 4.
    """
    word_ids = np.asarray(doc[0], dtype=np.int64)
    counts = np.asarray(doc[1], dtype=np.int64)
    params.validate()
    k = params.num_components
    length = int(counts.sum()) if counts.size else 0
    if params.num_words * k > _MAX_CELLS or length > _MAX_LENGTH:
        raise DomainError("instance too large to enumerate")
    lg = math.lgamma
    alpha = [float(a) for a in params.alpha]
    theta = params.theta
    gp_like = params.family in (GP, CGP)
    if gp_like:
        beta = [float(b) for b in params.beta]
    rho = [float(r) for r in params.rho] if params.family == CGP else None
    if params.group_of_word is not None:
        group_len = [0.0] * params.num_groups
        for j, w in zip(word_ids, counts):
            group_len[params.group_of_word[j]] += float(w)
    per_word = [list(_compositions(int(w), k)) for w in counts]
    values = []
    for rows in itertools.product(*per_word):
        c = [sum(row[kk] for row in rows) for kk in range(k)]
        word_term = 0.0
        dead = False
        for row, j in zip(rows, word_ids):
            for kk in range(k):
                v = row[kk]
                if v:
                    t = theta[j, kk]
                    if t <= 0.0:
                        dead = True
                        break
                    word_term += v * math.log(t) - lg(v + 1)
            if dead:
                break
        if dead:
            continue
        if gp_like:
            comp = 0.0
            for kk in range(k):
                base = (
                    lg(c[kk] + alpha[kk])
                    - lg(alpha[kk])
                    + alpha[kk] * math.log(beta[kk])
                    - (c[kk] + alpha[kk]) * math.log(1.0 + beta[kk])
                )
                if rho is None:
                    comp += base
                else:
                    mix = (1.0 - rho[kk]) * math.exp(base)
                    if c[kk] == 0:
                        mix += rho[kk]
                    if mix <= 0.0:
                        comp = float("-inf")
                        break
                    comp += math.log(mix)
        else:
            asum = sum(alpha)
            comp = lg(asum) - lg(length + asum)
            for kk in range(k):
                comp += lg(c[kk] + alpha[kk]) - lg(alpha[kk])
            if params.group_of_word is not None:
                for gl in group_len:
                    comp += lg(gl + 1.0)
            else:
                comp += lg(length + 1.0)
        values.append(comp + word_term)
    if not values:
        return float("-inf")
    peak = max(values)
    if peak == float("-inf"):
        return peak
    return peak + math.log(sum(math.exp(v - peak) for v in values))


def expected_component_counts(params, states):
    """Per-document expected component-generated word counts.

    `states` is either the (I, K) matrix of per-document surrogate shapes
    from a variational fit (expected counts are a - alpha) or a ChainSummary
    (its posterior-mean counts are used directly).
    """
    if hasattr(states, "mean_counts"):
        return np.asarray(states.mean_counts, dtype=np.float64)
    states = np.asarray(states, dtype=np.float64)
    return states - params.alpha[None, :]


def export_features(corpus, params, states, threshold=0.01, path=None):
    """Component-count features for downstream classifiers.

    Returns the dense unthresholded (I, K) matrix (rows sum to the document
    lengths).  The sparse docword-style output, written when `path` is
    given, drops entries below `threshold` as absent; counts are reals.
    """
    feats = expected_component_counts(params, states)
    if feats.shape[0] != corpus.num_docs:
        raise DataError("feature matrix does not match the corpus")
    if path is not None:
        keep = feats >= threshold
        rows, cols = np.nonzero(keep)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"{corpus.num_docs}\n{params.num_components}\n{len(rows)}\n")
            for i, kk in zip(rows, cols):
                handle.write(f"{i + 1} {kk + 1} {feats[i, kk]!r}\n")
    return feats
